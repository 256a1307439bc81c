import numpy as np
import pytest

from protoquad.embedders.logistic import ParamVector
from protoquad.evaluation.metrics import EvaluationMetrics
from protoquad.parsers.base import Dataset


def test_accuracy_and_log_likelihood():
    """A zero model predicts 1/2 everywhere: log-likelihood -ln 2."""
    data = Dataset(np.array([[1.0], [-1.0], [2.0], [-3.0]]), np.array([1, 0, 0, 0]))
    params = ParamVector([1.0, 0.0])

    assert EvaluationMetrics.accuracy(params, data) == 0.75
    assert EvaluationMetrics.mean_log_likelihood(ParamVector([0.0, 0.0]), data) == pytest.approx(-np.log(2))


def test_fraction_fixed():
    order = [4, 0, 7, 2, 9]
    flipped = [0, 2, 5, 9]

    fixed = EvaluationMetrics.fraction_fixed(order, flipped, [0, 1, 2, 4, 5, 50])
    assert fixed == [0.0, 0.0, 0.25, 0.5, 0.75, 0.75]
    with pytest.raises(ValueError):
        EvaluationMetrics.fraction_fixed(order, [], [1])


def test_rank_agreement():
    first = [3.0, 2.0, 1.0, 0.0]

    agreement = EvaluationMetrics.rank_agreement(first, [30.0, 20.0, 10.0, 0.0], top_k=2)
    assert agreement == {"spearman": pytest.approx(1.0), "top_overlap": 1.0}
    assert np.isnan(EvaluationMetrics.rank_agreement(first, [1.0] * 4)["spearman"])
    with pytest.raises(ValueError):
        EvaluationMetrics.rank_agreement(first, [1.0])
