import logging
import math
from typing import Optional

import numpy as np

from protoquad.kernels.base import BaseKernel
from protoquad.kernels.fisher import AffinityVector
from protoquad.selection.base import TOL_D_SCALE, SelectionReport, build_report
from protoquad.selection.sbq import accept_best, normalize_pool, run_greedy, score_candidates

logger = logging.getLogger(__name__)


def sample_size(pool_size: int, k: int, delta: float) -> int:
    """Candidates scored per step: ceil((t / k) * ln(1 / delta)), clamped to [1, t]."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    if pool_size < 1:
        return 0
    nominal = math.ceil((pool_size / k) * math.log(1.0 / delta))
    return min(pool_size, max(1, nominal))


def select_stochastic(k: int, delta: float, seed: int, oracle: BaseKernel, affinity: AffinityVector,
                      tol_d: Optional[float] = None, candidates=None, verify_inverse: bool = True,
                      tol_d_scale: float = TOL_D_SCALE) -> SelectionReport:
    """Greedy selection scoring a random subset of the candidates at each step.

    The subset size is fixed from the full pool size t; once it covers what is left of
    the pool the step scans every remaining candidate in index order without drawing from
    the generator, so runs with a large enough sample reproduce ``select_sbq`` exactly.

    Args:
        k (int): Number of prototypes
        delta (float): Failure probability in (0, 1]; smaller means larger samples
        seed (int): Seed of the sampling generator
        oracle (BaseKernel): Kernel over the training pool
        affinity (AffinityVector): Affinity of the pool to the test set
        tol_d (float): Absolute degeneracy threshold
        candidates (array-like): Restrict selection to these training indices
        verify_inverse (bool): Check K_SS * inv = I after every step
        tol_d_scale (float): Relative degeneracy threshold

    Returns:
        SelectionReport: Report with method "stochastic"
    """
    pool = normalize_pool(oracle, affinity, candidates)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    size = sample_size(pool.size, k, delta)
    rng = np.random.default_rng(seed)

    def step(state, remaining, excluded, tally):
        while True:
            if size >= remaining.size:
                sample = remaining
            else:
                sample = np.sort(rng.choice(remaining, size=size, replace=False))
            cs = score_candidates(state, oracle, affinity, sample, tol_d, tol_d_scale, tally)
            if np.any(np.isfinite(cs.gains)) or sample is remaining:
                return accept_best(state, cs.gains, cs, affinity, excluded)
            # every sampled candidate is degenerate: drop them and draw again
            excluded.update(int(j) for j in cs.degenerate)
            remaining = remaining[~np.isin(remaining, cs.degenerate)]
            if remaining.size == 0:
                return accept_best(state, cs.gains, cs, affinity, excluded)

    state, trace, tally, truncated = run_greedy(k, pool, step, verify_inverse)
    config = {
        "k": k,
        "delta": delta,
        "sample_size": size,
        "tol_d": tol_d,
        "tol_d_scale": tol_d_scale,
        "num_candidates": int(pool.size),
        "verify_inverse": verify_inverse,
    }
    return build_report(state, trace, affinity.test_self_term, tally.count, config, truncated,
                        "stochastic", seed)
