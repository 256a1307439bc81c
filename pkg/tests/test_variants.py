import numpy as np
import pytest

from protoquad.embedders.base import GradientMatrix
from protoquad.embedders.fisher import estimate_fisher_info
from protoquad.evaluation.analysis import brute_force_optimum, sparse_eigenvalue, subset_objective
from protoquad.kernels.fisher import AffinityVector, KernelOracle, affinity_vector
from protoquad.kernels.precomputed import PrecomputedKernel
from protoquad.selection.base import VariantConfig
from protoquad.selection.distributed import partition_pool, select_distributed
from protoquad.selection.matching_pursuit import select_mp
from protoquad.selection.sbq import select_sbq
from protoquad.selection.stochastic import sample_size, select_stochastic
from protoquad.selection.universal import UniversalSelector


def practical_problem(t=400, p=20, n=30, seed=0):
    rng = np.random.default_rng(seed)
    train = GradientMatrix(rng.normal(size=(t, p)))
    test = GradientMatrix(rng.normal(loc=0.3, size=(n, p)))
    oracle = KernelOracle(train, test, estimate_fisher_info(train, mode="practical"))
    return oracle, affinity_vector(oracle)


def same_selection(first, second):
    return (first.selections == second.selections
            and np.allclose(first.weights, second.weights, rtol=0, atol=0)
            and first.objective_trace == second.objective_trace)


def test_evaluation_counts():
    """At t=400 and k=10 the selectors charge 21670, 18115 and 5115 evaluations."""
    oracle, affinity = practical_problem()

    assert select_sbq(10, oracle, affinity).kernel_evals == 21670
    assert select_mp(10, oracle, affinity).kernel_evals == 18115
    stochastic = select_stochastic(10, 0.1, 0, oracle, affinity)
    assert stochastic.config["sample_size"] == 93
    assert stochastic.kernel_evals == 5115


def test_sample_size():
    assert sample_size(400, 10, 0.1) == 93
    assert sample_size(10, 10, 1.0) == 1
    assert sample_size(50, 2, 1e-9) == 50
    assert sample_size(0, 3, 0.5) == 0
    with pytest.raises(ValueError):
        sample_size(10, 2, 0.0)


def test_stochastic_with_full_sample_matches_sbq():
    """A sample covering the whole pool reproduces the exact greedy run."""
    oracle, affinity = practical_problem(t=60)
    exact = select_sbq(8, oracle, affinity)
    sampled = select_stochastic(8, 1e-12, 5, oracle, affinity)

    assert sampled.config["sample_size"] == 60
    assert same_selection(exact, sampled)
    assert sampled.kernel_evals == exact.kernel_evals


def test_stochastic_is_seeded():
    oracle, affinity = practical_problem(t=200)

    first = select_stochastic(6, 0.2, 3, oracle, affinity)
    second = select_stochastic(6, 0.2, 3, oracle, affinity)
    assert first.to_json() == second.to_json()


def test_single_partition_matches_sbq():
    oracle, affinity = practical_problem(t=80)
    exact = select_sbq(6, oracle, affinity)
    single = select_distributed(6, 1, 0, oracle, affinity)

    assert same_selection(exact, single)
    assert single.kernel_evals == exact.kernel_evals
    assert single.method == "distributed"


def test_matching_pursuit_first_pick_matches_sbq():
    """With nothing selected both selectors rank candidates by z_j^2 / k(j, j)."""
    oracle, affinity = practical_problem(t=120)

    assert select_mp(1, oracle, affinity).selections == select_sbq(1, oracle, affinity).selections


def test_matching_pursuit_weights_are_projection():
    oracle, affinity = practical_problem(t=100)
    report = select_mp(5, oracle, affinity)
    S = report.selections
    K = oracle.train_block(S, S)

    assert np.allclose(K @ np.asarray(report.weights), affinity.z[S], atol=1e-8)


def test_matching_pursuit_equals_sbq_on_identity_kernel():
    """With orthonormal atoms both selectors take the largest |z_j| in turn."""
    z = np.random.default_rng(5).normal(size=12)
    kernel = PrecomputedKernel(np.eye(12))
    affinity = AffinityVector(z, float(z @ z))
    mp = select_mp(6, kernel, affinity)
    sbq = select_sbq(6, kernel, affinity)

    assert mp.selections == sbq.selections == np.argsort(-np.abs(z))[:6].tolist()
    assert np.allclose(mp.objective_trace, sbq.objective_trace, rtol=0, atol=1e-12)


def test_matching_pursuit_against_brute_force():
    """MP at size r is within m_r / (r * max k_jj) of the best size-r subset and never above it."""
    rng = np.random.default_rng(8)
    t, r = 10, 3
    X = rng.normal(size=(t, t + 5)) / np.sqrt(t + 5)
    K = X @ X.T
    z = rng.normal(size=t)
    report = select_mp(r, PrecomputedKernel(K), AffinityVector(z, 10.0))

    best_subset, value = brute_force_optimum(K, z, r)
    best = -value
    achieved = subset_objective(K, z, report.selections)
    ratio = sparse_eigenvalue(K, r, "min") / (r * np.max(np.diag(K)))

    assert len(best_subset) <= r
    assert achieved <= best + 1e-10
    assert achieved >= ratio * best - 1e-12
    assert report.objective == pytest.approx(achieved, rel=1e-8)


def test_distributed_footprint_and_quality():
    """Each shard kernel fits in (t / l + k)^2 entries; the answer is no worse than any shard."""
    t, k, partitions = 400, 10, 4
    oracle, affinity = practical_problem(t=t)
    report = select_distributed(k, partitions, 7, oracle, affinity, threads=2)

    assert len(report.selections) == k
    assert len(report.shard_stats) == partitions + 1
    for stats in report.shard_stats:
        assert stats["kernel_footprint"] <= (t / partitions + k) ** 2
    shard_best = max(s["objective"] for s in report.shard_stats if s["stage"] == "shard")
    assert report.objective >= shard_best
    assert report.kernel_evals == sum(s["kernel_evals"] for s in report.shard_stats)


def test_distributed_caches_per_shard_only():
    """A caching oracle never builds the full train matrix; each shard caches its own block."""
    t, k, partitions = 400, 10, 4
    oracle, affinity = practical_problem(t=t)
    cached = KernelOracle(oracle.train_grads, oracle.test_grads, oracle.metric, cache_train=True)
    report = select_distributed(k, partitions, 7, cached, affinity, threads=2)
    plain = select_distributed(k, partitions, 7, oracle, affinity, threads=2)

    assert cached.cached_entries == 0
    assert report.selections == plain.selections
    for stats in report.shard_stats:
        assert stats["cached"]
        assert stats["kernel_footprint"] == stats["size"] ** 2
        assert stats["kernel_footprint"] <= (t / partitions + k) ** 2
    assert cached.eval_count == report.kernel_evals


def test_uncached_footprint_is_measured():
    """Without caching the footprint is the largest block a shard evaluated, below size * (k + 1)."""
    t, k, partitions = 200, 5, 2
    oracle, affinity = practical_problem(t=t, seed=3)
    report = select_distributed(k, partitions, 0, oracle, affinity)

    for stats in report.shard_stats:
        assert not stats["cached"]
        assert 0 < stats["kernel_footprint"] <= stats["size"] * k
        assert stats["kernel_footprint"] < stats["size"] ** 2


def test_partition_pool_covers_pool():
    pool = np.arange(23)
    shards = partition_pool(pool, 4, seed=1)

    assert len(shards) == 4
    assert sorted(np.concatenate(shards).tolist()) == pool.tolist()
    assert max(s.size for s in shards) - min(s.size for s in shards) <= 1
    with pytest.raises(ValueError):
        partition_pool(pool, 0, seed=1)


def test_universal_selector_dispatch():
    oracle, affinity = practical_problem(t=50)

    for method in ("sbq", "mp", "stochastic", "distributed"):
        selector = UniversalSelector(method=method, k=4, delta=0.5, partitions=2, seed=1)
        report = selector.select(oracle, affinity)
        assert report.method == method
        assert len(report.selections) == 4
    assert UniversalSelector("SBQ", k=2).method == "sbq"
    assert len(UniversalSelector(k=4).select(oracle, affinity, k=2).selections) == 2


def test_variant_config_validation():
    with pytest.raises(ValueError):
        VariantConfig(method="lasso")
    with pytest.raises(ValueError):
        VariantConfig(k=0)
    with pytest.raises(ValueError):
        VariantConfig(delta=1.5)
    with pytest.raises(ValueError):
        VariantConfig(partitions=0)

    config = VariantConfig(method="stochastic", k=3, delta=0.5, seed=2)
    assert UniversalSelector.from_config(config).config == config
