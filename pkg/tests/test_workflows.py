import numpy as np
import pytest

from protoquad.exceptions import ExperimentError
from protoquad.parsers.base import Dataset
from protoquad.selection.universal import UniversalSelector
from protoquad.workflows import (
    ExperimentConfig,
    ExperimentReport,
    make_logistic_data,
    plant_label_noise,
    run_experiment,
    selection_order,
)
from protoquad.workflows.base import CSV_COLUMNS, baseline_order, build_oracle, fit_model
from protoquad.workflows.mislabel import inspection_budgets
from protoquad.workflows.neighbours import make_square_data, neighbour_sets, pick_query
from protoquad.workflows.summarize import clipped_quadrature_weights, matched_weights


def small_config(task, **overrides):
    params = dict(task=task, n_train=150, n_val=80, n_test=200, seeds=[0])
    params.update(overrides)
    return ExperimentConfig(**params)


def test_config_defaults_follow_task():
    assert small_config("clean").noise_mode == "targeted"
    assert small_config("mislabel").direction == "harmful"
    summarize = small_config("summarize")
    assert (summarize.extension, summarize.direction) == ("restart", "any")


def test_config_validation():
    with pytest.raises(ExperimentError):
        ExperimentConfig(task="compress")
    with pytest.raises(ExperimentError):
        small_config("mislabel", flip_fraction=1.0)
    with pytest.raises(ExperimentError):
        small_config("clean", baselines=["oracle"])
    with pytest.raises(ExperimentError):
        small_config("summarize", seeds=[])
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_dict({"task": "clean", "budget": 3})
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_dict({"n_train": 10})


def test_config_from_json(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text('{"task": "summarize", "subset_sizes": [5, 10]}', encoding="utf-8")
    config = ExperimentConfig.from_json(str(path))

    assert config.subset_sizes == [5, 10]
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_json(str(path))


def test_uniform_noise_respects_protected():
    data, _ = make_logistic_data(50, 2, seed=0)
    protected = list(range(10))
    noisy, flipped = plant_label_noise(data, 0.1, "uniform", seed=3, protected=protected)

    assert flipped.size == 5
    assert not set(flipped.tolist()) & set(protected)
    assert np.array_equal(noisy.labels[flipped], 1 - data.labels[flipped])
    unchanged = np.setdiff1d(np.arange(50), flipped)
    assert np.array_equal(noisy.labels[unchanged], data.labels[unchanged])


def test_targeted_noise_flips_confident_positives():
    """Targeted noise takes the label-1 examples furthest along feature 0."""
    features = np.array([[3.0], [1.0], [2.0], [-1.0], [5.0]])
    data = Dataset(features, np.array([1, 1, 1, 0, 0]))
    noisy, flipped = plant_label_noise(data, 0.4, "targeted")

    assert flipped.tolist() == [0, 2]
    assert noisy.labels.tolist() == [0, 1, 0, 0, 0]


def oracle_for(seed=0, n=120):
    config = small_config("clean")
    data, _ = make_logistic_data(n + 60, 3, seed=seed)
    train, val = data.subset(range(n)), data.subset(range(n, n + 60))
    params = fit_model(config, train)
    return build_oracle(params, train, val)


def test_harmful_order_starts_with_negative_affinity():
    """Harmful ordering exhausts the z < 0 candidates before any other."""
    oracle, affinity = oracle_for()
    order = selection_order(UniversalSelector(k=1), oracle, affinity, np.arange(120), 120,
                            extension="affinity", direction="harmful")
    negative = int(np.sum(affinity.z < 0))

    assert sorted(order) == list(range(120))
    assert np.all(affinity.z[order[:negative]] < 0)
    assert np.all(affinity.z[order[negative:]] >= 0)


def test_order_extends_past_kernel_rank():
    """The kernel rank is at most d + 1, so both extensions fill the order."""
    oracle, affinity = oracle_for()
    for extension in ("affinity", "restart"):
        order = selection_order(UniversalSelector(k=1), oracle, affinity, np.arange(30, 90), 40,
                                extension=extension, direction="any")

        assert len(order) == len(set(order)) == 40
        assert set(order) <= set(range(30, 90))


def test_baseline_orders():
    oracle, affinity = oracle_for()
    candidates = np.arange(10, 50)
    random_order = baseline_order("random", oracle, candidates, seed=4)
    self_order = baseline_order("self_influence", oracle, candidates, seed=4)

    assert sorted(random_order) == candidates.tolist()
    assert random_order == baseline_order("random", oracle, candidates, seed=4)
    diag = oracle.train_diagonal(self_order)
    assert np.all(np.diff(diag) <= 0)
    with pytest.raises(ExperimentError):
        baseline_order("loss", oracle, candidates, seed=0)


def test_inspection_budgets():
    assert inspection_budgets([0.05, 0.5, 1.0], 88) == [4, 44, 88]


def test_cleaning_budget_zero_is_baseline():
    config = small_config("clean", removal_counts=[0, 10, 20], noise_fraction=0.1)
    report = run_experiment(config)

    assert report.values("sbq", "test_accuracy", 0) == report.reference("baseline", "test_accuracy")
    assert set(report.methods()) == {"sbq", "random", "self_influence"}
    for method in report.methods():
        assert report.values(method, "flipped_removed", 0) == [0.0]
        assert len(report.values(method, "test_accuracy", 20)) == 1


def test_cleaning_curated_indices():
    config = small_config("clean", removal_counts=[0, 5], noise_fraction=0.1, curated_indices=[3, 1, 3])
    report = run_experiment(config)

    assert len(report.values("curated", "test_accuracy", 2)) == 1
    with pytest.raises(ExperimentError):
        run_experiment(small_config("clean", removal_counts=[0, 5], noise_fraction=0.1,
                                    curated_indices=[150]))


def test_cleaning_needs_misclassified_points(tmp_path):
    """A separable dataset without noise leaves nothing to clean against."""
    rows = ["label,f1"]
    for i in range(80):
        x = (1.0 + i / 80.0) * (1 if i % 2 else -1)
        rows.append(f"{int(x > 0)},{x}")
    path = tmp_path / "separable.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    config = ExperimentConfig(task="clean", dataset=str(path), n_train=40, n_val=20, n_test=20,
                              noise_fraction=0.0, removal_counts=[0, 5])

    with pytest.raises(ExperimentError, match="misclassified"):
        run_experiment(config)


def test_cleaning_budget_exceeding_pool():
    with pytest.raises(ExperimentError):
        run_experiment(small_config("clean", removal_counts=[0, 500]))


def test_mislabel_without_flips():
    with pytest.raises(ExperimentError):
        run_experiment(small_config("mislabel", flip_fraction=0.0))


def test_mislabel_full_inspection_fixes_everything():
    """Inspecting every candidate finds every flip, whatever the order."""
    config = small_config("mislabel", inspect_fractions=[0.2, 1.0])
    report = run_experiment(config)
    full = inspection_budgets([1.0], 150 - int(round(0.12 * 150)))[0]

    for method in ("sbq", "random", "self_influence"):
        assert report.values(method, "fraction_fixed", full) == [1.0]
    clean = report.reference("clean", "test_accuracy")
    assert report.values("sbq", "test_accuracy", full) == pytest.approx(clean)


def test_summarize_full_size_matches_full_model():
    """k = t retrains on the whole training set; k = 1 is skipped and flagged."""
    config = small_config("summarize", subset_sizes=[1, 20, 150])
    report = run_experiment(config)
    full_ll = report.reference("full", "test_log_likelihood")

    assert report.values("sbq", "test_log_likelihood", 150) == full_ll
    assert report.values("random", "test_log_likelihood", 150) == full_ll
    assert report.values("sbq", "test_log_likelihood", 1) == []
    assert any("below 2" in flag for flag in report.flags)


def test_summarize_oversized_subset_is_flagged():
    report = run_experiment(small_config("summarize", subset_sizes=[400]))

    assert report.records == []
    assert any("exceeds" in flag for flag in report.flags)


def test_matched_weights_reproduce_full_fit():
    """Weights matching the mean training gradient make the weighted refit land on the full fit."""
    config = small_config("summarize")
    data, _ = make_logistic_data(180, 3, seed=0)
    train, val = data.subset(range(120)), data.subset(range(120, 180))
    params = fit_model(config, train)
    oracle, _ = build_oracle(params, train, val)
    subset = np.arange(0, 120, 3)
    weights = matched_weights(oracle, subset)

    assert np.all(weights >= 0)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    grads = oracle.train_grads.rows
    assert np.allclose(weights @ grads[subset], grads.mean(axis=0), rtol=0, atol=1e-6)
    refit = fit_model(config, train.subset(subset), sample_weight=weights)
    assert np.allclose(refit.values, params.values, rtol=0, atol=1e-4)


def test_clipped_weights_are_nonnegative():
    oracle, affinity = oracle_for()
    weights = clipped_quadrature_weights(oracle, affinity, np.arange(10))

    assert weights is None or (np.all(weights >= 0) and weights.sum() == pytest.approx(1.0))


@pytest.mark.parametrize("weighting", ["none", "clipped", "matched"])
def test_summary_weighting_modes_record_curves(weighting):
    config = small_config("summarize", subset_sizes=[30], weighting=weighting)
    report = run_experiment(config)

    assert len(report.values("random", "test_log_likelihood", 30)) == 1
    assert len(report.values("sbq", "test_log_likelihood", 30)) + len(report.flags) >= 1
    with pytest.raises(ExperimentError):
        small_config("summarize", weighting="uniform")


def test_runs_are_deterministic():
    """Same config, same records; worker threads do not change the result."""
    config = small_config("summarize", subset_sizes=[20, 40], seeds=[0, 1])
    first = run_experiment(config)
    second = run_experiment(small_config("summarize", subset_sizes=[20, 40], seeds=[0, 1], threads=2))

    assert first.records == second.records
    assert first.to_json() == run_experiment(config).to_json()


def test_report_csv(tmp_path):
    report = ExperimentReport("clean", {})
    report.add("sbq", 10, "test_accuracy", 0, 0.75)
    report.add("random", 10, "test_accuracy", 0, 0.5)
    path = tmp_path / "curves.csv"
    report.save_csv(str(path))

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "sbq,10,test_accuracy,0,0.75"
    assert report.curve("random", "test_accuracy") == {10: 0.5}


def test_square_data_and_query():
    data = make_square_data(300, seed=2)
    query = pick_query(data)

    assert data.features.shape == (300, 2)
    assert data.features.min() >= 1.0 and data.features.max() <= 2.0
    assert data.labels[query] == 1
    assert set(np.unique(data.labels)) == {0, 1}


def test_fisher_and_rbf_neighbourhoods_differ():
    """On the square toy data the 40 nearest and 40 farthest points depend on the kernel."""
    config = ExperimentConfig(task="neighbours")
    data = make_square_data(config.toy_points, seed=0)
    query = pick_query(data)
    sets = neighbour_sets(config, data, query)

    for name in ("rbf", "fisher"):
        assert sets[name].nearest.size == sets[name].farthest.size == 40
        assert query not in sets[name].nearest and query not in sets[name].farthest
        assert np.intersect1d(sets[name].nearest, sets[name].farthest).size == 0
    distances = np.linalg.norm(data.features - data.features[query], axis=1)
    assert np.max(distances[sets["rbf"].nearest]) <= np.min(distances[sets["rbf"].farthest])
    nearest, farthest = sets["fisher"].overlap(sets["rbf"])
    assert nearest < 1.0
    assert farthest < 1.0
    assert set(sets["fisher"].nearest.tolist()) != set(sets["rbf"].nearest.tolist())


def test_neighbours_workflow_records():
    config = ExperimentConfig(task="neighbours", toy_points=400, n_neighbours=20, seeds=[0, 1])
    report = run_experiment(config)

    assert report.methods() == ["fisher", "rbf"]
    assert len(report.values("fisher", "nearest_overlap", 20)) == 2
    assert all(0.0 <= v <= 1.0 for v in report.values("rbf", "nearest_same_label", 20))
    with pytest.raises(ExperimentError):
        ExperimentConfig(task="neighbours", toy_points=10, n_neighbours=40)


@pytest.mark.slow
def test_mislabel_acceptance():
    """SBQ beats random by 0.1 of flips fixed at a 20% inspection budget, median over 10 seeds."""
    config = ExperimentConfig(task="mislabel", flip_fraction=0.2, seeds=list(range(10)))
    report = run_experiment(config)
    pool = config.n_train - int(round(config.curated_fraction * config.n_train))
    budget = inspection_budgets([0.2], pool)[0]

    sbq = np.median(report.values("sbq", "fraction_fixed", budget))
    random = np.median(report.values("random", "fraction_fixed", budget))
    assert sbq >= random + 0.1
    for b in inspection_budgets(config.inspect_fractions, pool):
        assert (np.median(report.values("sbq", "test_accuracy", b))
                >= np.median(report.values("random", "test_accuracy", b)))


@pytest.mark.slow
@pytest.mark.parametrize("k", [50, 100, 200])
def test_summarize_acceptance(k):
    """Fisher-selected subsets beat random ones in median test log-likelihood over 10 seeds."""
    config = ExperimentConfig(task="summarize", subset_sizes=[k], seeds=list(range(10)))
    report = run_experiment(config)

    sbq = np.median(report.values("sbq", "test_log_likelihood", k))
    random = np.median(report.values("random", "test_log_likelihood", k))
    assert len(report.values("sbq", "test_log_likelihood", k)) == 10
    assert sbq >= random


@pytest.mark.slow
def test_cleaning_acceptance():
    """Removing selected points is not worse than removing random ones, median over 10 seeds."""
    config = ExperimentConfig(task="clean", removal_counts=[0, 25, 50, 100], seeds=list(range(10)))
    report = run_experiment(config)

    for budget in (25, 50, 100):
        sbq = np.median(report.values("sbq", "test_accuracy", budget))
        random = np.median(report.values("random", "test_accuracy", budget))
        assert sbq >= random
