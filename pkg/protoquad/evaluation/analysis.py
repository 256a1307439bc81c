"""Brute-force instruments for checking the greedy guarantees on small instances.

All routines take an explicit kernel matrix K over the candidate pool and the affinity
vector z, and work with the objective g(S) = z_S^T K_SS^-1 z_S; the posterior variance
is v(S) = mu_pp - g(S).
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit

from protoquad.embedders.logistic import ParamVector, example_log_likelihood, per_example_gradients
from protoquad.exceptions import GuardExceededError, PremiseError
from protoquad.kernels.fisher import AffinityVector
from protoquad.kernels.precomputed import PrecomputedKernel
from protoquad.parsers.base import Dataset
from protoquad.selection.sbq import select_sbq

logger = logging.getLogger(__name__)

MAX_SUBSETS = 10 ** 6
SINGULAR_TOL = 1e-12


def _check_matrix(K) -> np.ndarray:
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise ValueError(f"Kernel matrix must be square and non-empty, got shape {K.shape}")
    if not np.allclose(K, K.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValueError("Kernel matrix is not symmetric")
    return K


def _guard(count: int, max_subsets: float, what: str) -> None:
    if count > max_subsets:
        raise GuardExceededError(
            f"{what} needs {count} subsets (guard {int(max_subsets)}); use a smaller instance "
            f"or raise analysis.max_subsets"
        )


def subset_objective(K: np.ndarray, z: np.ndarray, subset) -> float:
    """g(S) = z_S^T K_SS^-1 z_S by a dense solve (pseudo-inverse when K_SS is singular)."""
    subset = list(subset)
    if not subset:
        return 0.0
    kss = K[np.ix_(subset, subset)]
    zs = z[subset]
    try:
        sol = linalg.cho_solve(linalg.cho_factor(kss, lower=True), zs)
    except linalg.LinAlgError:
        sol = linalg.pinvh(kss) @ zs
    return float(zs @ sol)


def sparse_eigenvalue(K, s: int, which: str = "min", max_subsets: float = MAX_SUBSETS) -> float:
    """Extreme eigenvalue over all s x s principal submatrices of K.

    Args:
        K (array-like): Symmetric matrix
        s (int): Sparsity (support size), 1 <= s <= dim
        which (str): "min" or "max"
        max_subsets (float): Refuse when C(dim, s) exceeds this

    Returns:
        float: min over supports of the smallest eigenvalue, or max over supports of the largest
    """
    K = _check_matrix(K)
    dim = K.shape[0]
    if which not in ("min", "max"):
        raise ValueError(f"which must be 'min' or 'max', got {which}")
    if not 1 <= s <= dim:
        raise ValueError(f"Sparsity must be in [1, {dim}], got {s}")
    _guard(math.comb(dim, s), max_subsets, f"Sparse eigenvalue at s={s}")

    if s == dim:
        eig = linalg.eigvalsh(K)
        return float(eig[0] if which == "min" else eig[-1])

    best = np.inf if which == "min" else -np.inf
    for support in itertools.combinations(range(dim), s):
        sub = K[np.ix_(support, support)]
        if which == "min":
            best = min(best, linalg.eigvalsh(sub, subset_by_index=[0, 0])[0])
        else:
            best = max(best, linalg.eigvalsh(sub, subset_by_index=[s - 1, s - 1])[0])
    return float(best)


def brute_force_optimum(K, z, r: int, mu_pp: float = 0.0,
                        max_subsets: float = MAX_SUBSETS) -> Tuple[Tuple[int, ...], float]:
    """Best subset of size at most r by exhaustive search.

    Args:
        K (array-like): Kernel matrix over the pool
        z (array-like): Affinity vector
        r (int): Maximum subset size
        mu_pp (float): Test self-term; v(S) = mu_pp - g(S)
        max_subsets (float): Enumeration guard

    Returns:
        Tuple: (S*, v(S*)); among equal values the lexicographically smallest subset wins
    """
    K = _check_matrix(K)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    t = K.shape[0]
    if z.shape[0] != t:
        raise ValueError(f"z has {z.shape[0]} entries for a {t} x {t} kernel")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    r = min(r, t)
    _guard(sum(math.comb(t, i) for i in range(r + 1)), max_subsets, f"Brute force at r={r}")

    best_subset: Tuple[int, ...] = ()
    best_value = 0.0
    for size in range(1, r + 1):
        for subset in itertools.combinations(range(t), size):
            value = subset_objective(K, z, subset)
            if value > best_value or (value == best_value and subset < best_subset):
                best_subset, best_value = subset, value
    return best_subset, float(mu_pp - best_value)


@dataclass
class BoundReport:
    """Outcome of checking the greedy convergence bound on one instance."""

    m: float
    M: float
    r: int
    k: int
    epsilon: float
    target_epsilon: float
    holds: bool
    greedy_objective: float
    optimum_objective: float
    optimum: List[int]
    corollary_at_r: bool
    corollary_at_k: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def verify_convergence_bound(K, z, r: int, epsilon: float = 0.1,
                             max_subsets: float = MAX_SUBSETS) -> BoundReport:
    """Run greedy selection for ceil((M/m) r ln(1/epsilon)) steps and check
    v(S_G) - v(S*) <= epsilon (v(empty) - v(S*)) against the brute-force optimum.

    m is the smallest 2r-sparse eigenvalue and M the largest (r+1)-sparse eigenvalue of K.
    Also checks g(S_G) >= (1 - exp(-m k / (M r))) g(S*) after r steps and after k steps.

    Args:
        K (array-like): Kernel matrix over the pool
        z (array-like): Affinity vector
        r (int): Size of the comparison optimum
        epsilon (float): Target ratio in (0, 1)
        max_subsets (float): Enumeration guard

    Returns:
        BoundReport: Sparse eigenvalues, step count and achieved ratio
    """
    K = _check_matrix(K)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    t = K.shape[0]
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if not 1 <= r <= t:
        raise ValueError(f"r must be in [1, {t}], got {r}")

    m = sparse_eigenvalue(K, min(2 * r, t), "min", max_subsets)
    M = sparse_eigenvalue(K, min(r + 1, t), "max", max_subsets)
    if m <= SINGULAR_TOL:
        raise PremiseError(f"Smallest {min(2 * r, t)}-sparse eigenvalue is {m:.3e}; the bound is vacuous")

    k = min(t, max(1, math.ceil((M / m) * r * math.log(1.0 / epsilon))))
    optimum, _ = brute_force_optimum(K, z, r, 0.0, max_subsets)
    g_opt = subset_objective(K, z, optimum)

    report = select_sbq(k, PrecomputedKernel(K), AffinityVector(z, 0.0), tol_d=0.0)
    trace = report.objective_trace
    g_k = trace[-1] if trace else 0.0
    g_r = trace[min(r, len(trace)) - 1] if trace else 0.0

    slack = 1e-10 * max(1.0, abs(g_opt))
    achieved = max(0.0, (g_opt - g_k) / g_opt) if g_opt > 0 else 0.0
    holds = g_opt - g_k <= epsilon * g_opt + slack
    corollary_r = g_r >= (1.0 - math.exp(-m / M)) * g_opt - slack
    corollary_k = g_k >= (1.0 - math.exp(-m * k / (M * r))) * g_opt - slack
    if not holds:
        logger.warning("Convergence bound violated: ratio %.4f > %.4f (m=%.3e, M=%.3e, k=%d)",
                       achieved, epsilon, m, M, k)
    return BoundReport(
        m=m, M=M, r=r, k=k, epsilon=achieved, target_epsilon=epsilon, holds=bool(holds),
        greedy_objective=g_k, optimum_objective=g_opt, optimum=list(optimum),
        corollary_at_r=bool(corollary_r), corollary_at_k=bool(corollary_k),
    )


@dataclass
class SubmodularityReport:
    """Empirical weak-submodularity ratios against the sparse-eigenvalue lower bound."""

    min_ratio: float
    bound: float
    holds: bool
    pairs: int
    skipped: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _disjoint_pairs(t: int, trials: Optional[int], rng: np.random.Generator):
    if trials is None:
        # every assignment of each atom to L, S or neither
        for labels in itertools.product((0, 1, 2), repeat=t):
            left = tuple(i for i in range(t) if labels[i] == 1)
            right = tuple(i for i in range(t) if labels[i] == 2)
            if right:
                yield left, right
        return
    for _ in range(trials):
        labels = rng.integers(0, 3, size=t)
        right = tuple(np.flatnonzero(labels == 2).tolist())
        if not right:
            right = (int(rng.integers(0, t)),)
            labels[right[0]] = 2
        yield tuple(np.flatnonzero(labels == 1).tolist()), right


def submodularity_ratio(K, z, trials: Optional[int] = 200, seed: int = 0,
                        max_subsets: float = MAX_SUBSETS) -> SubmodularityReport:
    """Minimum of sum_j [g(L + j) - g(L)] / [g(L + S) - g(L)] over disjoint pairs (L, S).

    Each ratio is compared with m / M, m being the smallest |L + S|-sparse eigenvalue and
    M the largest (|S| + 1)-sparse eigenvalue of K.

    Args:
        K (array-like): Kernel matrix over the pool
        z (array-like): Affinity vector
        trials (int): Number of sampled pairs; None enumerates every pair
        seed (int): Seed for sampling pairs
        max_subsets (float): Guard for the sparse eigenvalues

    Returns:
        SubmodularityReport: Minimum ratio, the weakest bound and pair counts
    """
    K = _check_matrix(K)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    t = K.shape[0]
    if trials is None:
        _guard(3 ** t, max_subsets, "Exhaustive pair enumeration")

    @lru_cache(maxsize=None)
    def g(subset: Tuple[int, ...]) -> float:
        return subset_objective(K, z, subset)

    @lru_cache(maxsize=None)
    def bound(union_size: int, right_size: int) -> float:
        m = sparse_eigenvalue(K, union_size, "min", max_subsets)
        M = sparse_eigenvalue(K, min(right_size + 1, t), "max", max_subsets)
        return m / M

    rng = np.random.default_rng(seed)
    min_ratio = np.inf
    weakest = np.inf
    holds = True
    pairs = skipped = 0
    for left, right in _disjoint_pairs(t, trials, rng):
        base = g(left)
        joint = g(tuple(sorted(left + right))) - base
        if joint <= 1e-12 * max(1.0, abs(base)):
            skipped += 1
            continue
        singles = sum(g(tuple(sorted(left + (j,)))) - base for j in right)
        ratio = singles / joint
        lower = bound(len(left) + len(right), len(right))
        pairs += 1
        min_ratio = min(min_ratio, ratio)
        weakest = min(weakest, lower)
        if ratio < lower - 1e-8:
            holds = False
            logger.warning("Submodularity ratio %.6g below bound %.6g for L=%s, S=%s",
                           ratio, lower, left, right)
    if pairs == 0:
        raise PremiseError("Every sampled pair had a zero joint gain")
    return SubmodularityReport(float(min_ratio), float(weakest), holds, pairs, skipped)


@dataclass
class HessianGramReport:
    """Comparison of the log-likelihood Hessian with the gradient Gram at the fit."""

    relative_frobenius: float
    alignment: float
    hessian_norm: float
    gram_norm: float
    grad_norm: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def hessian_gram_check(data: Dataset, params: ParamVector, gate: float = 1e-6) -> HessianGramReport:
    """Compare H = (1/n) sum s(1-s) x x^T with G = (1/n) sum (y-s)^2 x x^T.

    The two agree in expectation at the optimum of a well-specified model.

    Args:
        data (Dataset): Labelled examples
        params (ParamVector): Parameters at the unregularized optimum
        gate (float): Largest accepted infinity norm of the mean log-likelihood gradient

    Returns:
        HessianGramReport: ||H - G||_F / ||H||_F and |cos| between top eigenvectors
    """
    if not data.has_labels:
        raise PremiseError("Hessian check needs labels")
    X = params.design(data.features)
    sigma = expit(X @ params.values)
    residual = data.labels - sigma
    grad_norm = float(np.max(np.abs(X.T @ residual / data.n)))
    if grad_norm > gate:
        raise PremiseError(
            f"Gradient norm {grad_norm:.3e} exceeds {gate:.1e}; parameters are not at the "
            f"unregularized optimum (train with l2=0)"
        )

    hessian = (X * (sigma * (1.0 - sigma))[:, None]).T @ X / data.n
    gram = (X * (residual ** 2)[:, None]).T @ X / data.n
    h_norm = float(np.linalg.norm(hessian, "fro"))
    g_norm = float(np.linalg.norm(gram, "fro"))
    diff = float(np.linalg.norm(hessian - gram, "fro"))
    if h_norm > 0:
        relative = diff / h_norm
    else:
        relative = 0.0 if diff == 0 else float("inf")

    if h_norm > 0 and g_norm > 0:
        top_h = linalg.eigh(hessian)[1][:, -1]
        top_g = linalg.eigh(gram)[1][:, -1]
        alignment = float(abs(top_h @ top_g))
    else:
        alignment = float("nan")
    return HessianGramReport(relative, alignment, h_norm, g_norm, grad_norm, data.n)


def gradient_check(params: ParamVector, data: Dataset, trials: int = 1000, step: float = 1e-5,
                   seed: int = 0) -> float:
    """Largest relative error between analytic per-example gradients and central differences.

    Args:
        params (ParamVector): Parameters to differentiate at
        data (Dataset): Labelled examples
        trials (int): Number of randomly drawn examples
        step (float): Finite-difference step
        seed (int): Seed for drawing examples

    Returns:
        float: max over checked examples of ||g_fd - g|| / max(||g||, 1e-8)
    """
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, data.n, size=trials)
    sample = data.subset(picks)
    analytic = per_example_gradients(params, sample).rows
    numeric = np.empty_like(analytic)
    for q in range(params.param_dim):
        shift = np.zeros(params.param_dim)
        shift[q] = step
        up = ParamVector(params.values + shift, params.fit_intercept)
        down = ParamVector(params.values - shift, params.fit_intercept)
        diff = example_log_likelihood(up, sample) - example_log_likelihood(down, sample)
        numeric[:, q] = diff / (2 * step)
    scale = np.maximum(np.linalg.norm(analytic, axis=1), 1e-8)
    return float(np.max(np.linalg.norm(numeric - analytic, axis=1) / scale))
