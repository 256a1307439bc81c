import numpy as np
import pytest

from protoquad.embedders.logistic import train_logistic
from protoquad.evaluation.analysis import (
    brute_force_optimum,
    hessian_gram_check,
    sparse_eigenvalue,
    subset_objective,
    submodularity_ratio,
    verify_convergence_bound,
)
from protoquad.exceptions import GuardExceededError, PremiseError
from protoquad.kernels.fisher import AffinityVector
from protoquad.kernels.precomputed import PrecomputedKernel
from protoquad.parsers.base import Dataset
from protoquad.selection.sbq import select_sbq
from protoquad.workflows.base import make_logistic_data


def random_spd(rng, t, oversample=5):
    X = rng.normal(size=(t, t + oversample)) / np.sqrt(t + oversample)
    return X @ X.T


def test_sparse_eigenvalue_extremes():
    """At s = dim it is the spectrum's end; at s = 1 it is the diagonal's."""
    K = random_spd(np.random.default_rng(0), 6)
    eig = np.linalg.eigvalsh(K)

    assert sparse_eigenvalue(K, 6, "min") == pytest.approx(eig[0])
    assert sparse_eigenvalue(K, 6, "max") == pytest.approx(eig[-1])
    assert sparse_eigenvalue(K, 1, "min") == pytest.approx(np.min(np.diag(K)))
    assert sparse_eigenvalue(K, 1, "max") == pytest.approx(np.max(np.diag(K)))


def test_sparse_eigenvalue_is_monotone():
    """Larger supports can only widen the extreme eigenvalues."""
    K = random_spd(np.random.default_rng(1), 7)
    mins = [sparse_eigenvalue(K, s, "min") for s in range(1, 8)]
    maxs = [sparse_eigenvalue(K, s, "max") for s in range(1, 8)]

    assert all(b <= a + 1e-12 for a, b in zip(mins, mins[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(maxs, maxs[1:]))


def test_sparse_eigenvalue_guard():
    K = np.eye(30)

    with pytest.raises(GuardExceededError):
        sparse_eigenvalue(K, 15, max_subsets=1000)
    with pytest.raises(ValueError):
        sparse_eigenvalue(K, 0)


def test_brute_force_beats_greedy():
    """The exhaustive optimum is at least as good as greedy at the same size."""
    rng = np.random.default_rng(2)
    for _ in range(10):
        K = random_spd(rng, 8)
        z = rng.normal(size=8)
        optimum, variance = brute_force_optimum(K, z, 3, mu_pp=10.0)
        greedy = select_sbq(3, PrecomputedKernel(K), AffinityVector(z, 10.0), tol_d=0.0)

        assert len(optimum) <= 3
        assert variance == pytest.approx(10.0 - subset_objective(K, z, optimum))
        assert variance <= greedy.variance + 1e-10


def test_convergence_bound_holds():
    """Greedy reaches the bound and its corollary on 100 small random instances."""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        t = int(rng.integers(4, 11))
        r = int(rng.integers(1, min(3, t // 2) + 1))
        report = verify_convergence_bound(random_spd(rng, t), rng.normal(size=t), r, epsilon=0.1)

        assert report.holds
        assert report.corollary_at_k
        assert report.m <= report.M
        assert report.greedy_objective >= 0.9 * report.optimum_objective - 1e-10


def test_convergence_bound_on_singular_kernel():
    """A rank-2 kernel has no positive 4-sparse eigenvalue."""
    G = np.random.default_rng(3).normal(size=(6, 2))

    with pytest.raises(PremiseError):
        verify_convergence_bound(G @ G.T, np.ones(6), 2)


def test_convergence_bound_arguments():
    K = np.eye(4)

    with pytest.raises(ValueError):
        verify_convergence_bound(K, np.ones(4), 1, epsilon=1.0)
    with pytest.raises(ValueError):
        verify_convergence_bound(K, np.ones(4), 5)
    with pytest.raises(ValueError):
        verify_convergence_bound(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2), 1)


def test_submodularity_ratio_exhaustive():
    """Every disjoint pair on small pools respects the sparse-eigenvalue bound."""
    rng = np.random.default_rng(5)
    for t in (3, 4, 5):
        report = submodularity_ratio(random_spd(rng, t), rng.normal(size=t), trials=None)

        assert report.holds
        assert report.min_ratio >= report.bound - 1e-8
        assert report.pairs + report.skipped == 3 ** t - 2 ** t


def test_submodularity_ratio_sampled_is_seeded():
    rng = np.random.default_rng(6)
    K, z = random_spd(rng, 8), rng.normal(size=8)

    assert submodularity_ratio(K, z, trials=50, seed=1) == submodularity_ratio(K, z, trials=50, seed=1)


def test_submodularity_guard():
    with pytest.raises(GuardExceededError):
        submodularity_ratio(np.eye(14), np.ones(14), trials=None, max_subsets=1e6)


def test_hessian_matches_gram_at_optimum():
    """On a large well-specified sample the two matrices agree within 5%."""
    data, _ = make_logistic_data(20000, 5, seed=0, weight_scale=1.0)
    params = train_logistic(data, l2=0.0, tol=1e-10)
    report = hessian_gram_check(data, params)

    assert report.relative_frobenius <= 0.05
    assert report.n == 20000


def test_hessian_check_needs_optimum():
    """Regularized parameters fail the gradient gate."""
    data, _ = make_logistic_data(2000, 3, seed=1, weight_scale=1.0)
    params = train_logistic(data, l2=1.0)

    with pytest.raises(PremiseError, match="l2=0"):
        hessian_gram_check(data, params)
    with pytest.raises(PremiseError):
        hessian_gram_check(Dataset(data.features), params)
