from unittest.mock import Mock

import numpy as np
import pytest

from protoquad import ProtoQuad
from protoquad.config.manager import DEFAULT_CONFIG_PATH, ConfigManager
from protoquad.embedders.base import GradientMatrix
from protoquad.parsers.base import Dataset
from protoquad.pipeline import PrototypePipeline
from protoquad.workflows.base import make_logistic_data


def split(n_train=150, n_test=30, d=4, seed=0):
    data, _ = make_logistic_data(n_train + n_test, d, seed=seed)
    return data.subset(range(n_train)), data.subset(range(n_train, n_train + n_test))


def test_pipeline_initialization():
    """Test that the pipeline picks up its embedder and thread count."""
    mock_embedder = Mock()
    pipeline = PrototypePipeline(ConfigManager(str(DEFAULT_CONFIG_PATH)), embedder=mock_embedder, threads=3)

    assert pipeline.embedder == mock_embedder
    assert pipeline.threads == 3
    assert pipeline.oracle is None


def test_embed_fits_then_embeds_both_splits():
    """Test that embed fits on the training set and embeds each split."""
    rng = np.random.default_rng(0)
    mock_embedder = Mock()
    mock_embedder.embed.side_effect = [GradientMatrix(rng.normal(size=(6, 3))),
                                       GradientMatrix(rng.normal(size=(2, 3)))]
    pipeline = PrototypePipeline(embedder=mock_embedder)
    train, test = Dataset(np.zeros((6, 2)), np.zeros(6)), Dataset(np.zeros((2, 2)))

    train_grads, test_grads = pipeline.embed(train, test)

    mock_embedder.fit.assert_called_once_with(train)
    assert mock_embedder.embed.call_count == 2
    assert (train_grads.n, test_grads.n) == (6, 2)


def test_explain_selects_prototypes():
    train, test = split()
    pipeline = PrototypePipeline(ConfigManager(str(DEFAULT_CONFIG_PATH)))
    report = pipeline.explain(train, test, k=4)

    assert len(report.selections) == 4
    assert pipeline.oracle.num_train == 150
    assert len(pipeline.affinity) == 150
    assert report.variance_trace[-1] <= report.variance_trace[0]


def test_explain_practical_mode_and_method():
    train, test = split()
    pipeline = PrototypePipeline(ConfigManager(str(DEFAULT_CONFIG_PATH)))
    report = pipeline.explain(train, test, k=3, method="mp", mode="practical")

    assert report.method == "mp"
    assert pipeline.metric.mode == "practical"


def test_pipeline_influence():
    train, test = split()
    report = PrototypePipeline(ConfigManager(str(DEFAULT_CONFIG_PATH))).influence(train, test, 2, k=5)

    assert report.test_index == 2
    assert len(report.influence_scores) == 150


def test_facade_ignores_test_labels():
    """Explanations depend on test features only."""
    train, test = split()
    flipped = test.with_labels(1 - test.labels)
    explainer = ProtoQuad(k=5)

    assert explainer.explain(train, test).selections == explainer.explain(train, flipped).selections


def test_facade_settings():
    train, test = split()
    report = ProtoQuad(mode="practical", method="distributed", partitions=3, seed=2).explain(train, test, k=4)

    assert report.method == "distributed"
    assert report.config["partitions"] == 3
    with pytest.raises(ValueError):
        ProtoQuad(method="lasso").explain(train, test)
