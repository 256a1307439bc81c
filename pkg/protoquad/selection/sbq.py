"""Sequential Bayesian Quadrature: greedy minimization of the posterior variance.

Each step adds the candidate j maximizing g(S + j) = z^T K^-1 z over S + j. The gain
over g(S) is (z_j - b^T w)^2 / d with b = k(X_S, x_j), w = K_SS^-1 z_S and Schur
complement d = k(j, j) - b^T K_SS^-1 b, so candidates are scored without forming
tentative inverses and only the winner is folded into the state.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Set, Tuple

import numpy as np

from protoquad.exceptions import DegenerateCandidate, PoolExhausted
from protoquad.kernels.base import BaseKernel
from protoquad.kernels.fisher import AffinityVector
from protoquad.selection.base import (
    INVERSE_TOL,
    TOL_D_SCALE,
    EvalTally,
    InverseState,
    SelectionReport,
    build_report,
    extend_inverse,
    partial_report,
    tolerances,
)

logger = logging.getLogger(__name__)


@dataclass
class CandidateScores:
    """Per-candidate quantities for one greedy step (columns follow ``candidates``)."""

    candidates: np.ndarray
    gains: np.ndarray
    schur: np.ndarray
    border: np.ndarray
    diag: np.ndarray
    thresholds: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.candidates[~(self.schur > self.thresholds)]


def score_candidates(state: InverseState, oracle: BaseKernel, affinity: AffinityVector,
                     candidates: np.ndarray, tol_d: Optional[float] = None,
                     tol_d_scale: float = TOL_D_SCALE, tally: Optional[EvalTally] = None) -> CandidateScores:
    """Marginal gains of adding each candidate to the current selection.

    Costs (|S| + 1) kernel evaluations per candidate. Degenerate candidates get gain -inf.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    border = oracle.train_block(state.indices, candidates)
    diag = oracle.train_diagonal(candidates)
    if tally is not None:
        tally.add((state.size + 1) * candidates.size)

    schur = diag - np.einsum("ij,ij->j", border, state.inv @ border)
    residual = affinity.z[candidates] - border.T @ state.weights()
    thresholds = tolerances(diag, tol_d, tol_d_scale)
    valid = schur > thresholds
    gains = np.full(candidates.size, -np.inf)
    gains[valid] = residual[valid] ** 2 / schur[valid]
    return CandidateScores(candidates, gains, schur, border, diag, thresholds)


def accept_best(state: InverseState, scores: np.ndarray, candidate_scores: CandidateScores,
                affinity: AffinityVector, excluded: Set[int]) -> Tuple[int, InverseState]:
    """Fold the highest-scoring candidate into the state; ties go to the lowest index.

    ``scores`` are aligned with ``candidate_scores.candidates`` and must already be -inf
    for degenerate candidates. Candidates found degenerate are added to ``excluded``.
    """
    scores = scores.copy()
    cs = candidate_scores
    excluded.update(int(j) for j in cs.degenerate)
    while np.any(np.isfinite(scores)):
        pos = int(np.argmax(scores))
        chosen = int(cs.candidates[pos])
        try:
            new_state = extend_inverse(state, cs.border[:, pos], float(cs.diag[pos]),
                                       tol_d=float(cs.thresholds[pos]), index=chosen,
                                       z_value=float(affinity.z[chosen]))
        except DegenerateCandidate as e:
            logger.debug("Skipping degenerate candidate %d: %s", chosen, e)
            excluded.add(chosen)
            scores[pos] = -np.inf
            continue
        return chosen, new_state
    raise PoolExhausted(f"All {cs.candidates.size} scored candidates are degenerate",
                        partial_report(state, affinity.test_self_term, 0))


def _greedy_step(state, oracle, affinity, candidates, tol_d, tol_d_scale, excluded, tally):
    cs = score_candidates(state, oracle, affinity, candidates, tol_d, tol_d_scale, tally)
    if cs.degenerate.size:
        logger.debug("%d degenerate candidates excluded", cs.degenerate.size)
    return accept_best(state, cs.gains, cs, affinity, excluded)


def greedy_step(state: InverseState, oracle: BaseKernel, affinity: AffinityVector,
                candidates=None, tol_d: Optional[float] = None, tol_d_scale: float = TOL_D_SCALE,
                excluded: Optional[Set[int]] = None) -> Tuple[int, InverseState]:
    """Add the candidate with the largest objective g(S + j) to the selection.

    Args:
        state (InverseState): Current selection, left unchanged
        oracle (BaseKernel): Kernel over the training pool
        affinity (AffinityVector): Affinity of the pool to the test set
        candidates (array-like): Indices to consider; defaults to all unselected indices
        tol_d (float): Absolute degeneracy threshold overriding the relative default
        tol_d_scale (float): Relative degeneracy threshold, times max(k(j, j), 1)
        excluded (set): Indices to skip; degenerate candidates found are added to it

    Returns:
        Tuple[int, InverseState]: Chosen index and the grown state

    Raises:
        PoolExhausted: No non-degenerate candidate is left; ``report`` holds the selection so far
    """
    excluded = set() if excluded is None else excluded
    if candidates is None:
        candidates = remaining_candidates(np.arange(oracle.num_train), state.indices, excluded)
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise PoolExhausted("No unselected candidates remain",
                            partial_report(state, affinity.test_self_term, 0))
    tally = EvalTally()
    try:
        return _greedy_step(state, oracle, affinity, candidates, tol_d, tol_d_scale, excluded, tally)
    except PoolExhausted as e:
        raise PoolExhausted(str(e), partial_report(state, affinity.test_self_term, tally.count)) from e


def remaining_candidates(pool: np.ndarray, selected: List[int], excluded: Set[int]) -> np.ndarray:
    """Pool members that are neither selected nor excluded, in ascending order."""
    if not selected and not excluded:
        return pool
    skip = np.fromiter(set(selected) | excluded, dtype=np.int64)
    return pool[~np.isin(pool, skip)]


def normalize_pool(oracle: BaseKernel, affinity: AffinityVector, candidates=None) -> np.ndarray:
    """Sorted unique candidate indices, checked against the oracle and affinity sizes."""
    if len(affinity) != oracle.num_train:
        raise ValueError(f"Affinity has {len(affinity)} entries for {oracle.num_train} training points")
    if candidates is None:
        return np.arange(oracle.num_train)
    pool = np.unique(np.asarray(candidates, dtype=np.int64))
    if pool.size and (pool[0] < 0 or pool[-1] >= oracle.num_train):
        raise IndexError(f"Candidate index out of range [0, {oracle.num_train})")
    return pool


StepFn = Callable[[InverseState, np.ndarray, Set[int], EvalTally], Tuple[int, InverseState]]


def run_greedy(k: int, pool: np.ndarray, step: StepFn, verify_inverse: bool = True,
               tally: Optional[EvalTally] = None) -> Tuple[InverseState, List[float], EvalTally, bool]:
    """Shared loop for greedy selectors: grow the state k times or until the pool runs dry.

    Returns:
        Tuple: final state, objective trace, evaluation tally, truncated flag
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    tally = EvalTally() if tally is None else tally
    state = InverseState.empty()
    excluded: Set[int] = set()
    trace: List[float] = []
    truncated = False
    for _ in range(k):
        remaining = remaining_candidates(pool, state.indices, excluded)
        if remaining.size == 0:
            truncated = True
            break
        try:
            _, state = step(state, remaining, excluded, tally)
        except PoolExhausted:
            truncated = True
            break
        if verify_inverse:
            residual = state.inverse_residual()
            if residual > INVERSE_TOL:
                logger.warning("Inverse drifted (residual %.3e) at |S|=%d; rebuilding by dense solve",
                               residual, state.size)
                state = state.rebuild()
        trace.append(state.objective)
    if truncated:
        logger.warning("Selection stopped after %d of %d atoms: no non-degenerate candidate left "
                       "(%d excluded as degenerate)", state.size, k, len(excluded))
    return state, trace, tally, truncated


def select_sbq(k: int, oracle: BaseKernel, affinity: AffinityVector, tol_d: Optional[float] = None,
               candidates=None, verify_inverse: bool = True,
               tol_d_scale: float = TOL_D_SCALE) -> SelectionReport:
    """Greedy prototype selection.

    Args:
        k (int): Number of prototypes
        oracle (BaseKernel): Kernel over the training pool
        affinity (AffinityVector): Affinity of the pool to the test set
        tol_d (float): Absolute degeneracy threshold overriding the relative default
        candidates (array-like): Restrict selection to these training indices
        verify_inverse (bool): Check K_SS * inv = I after every step and rebuild on drift
        tol_d_scale (float): Relative degeneracy threshold

    Returns:
        SelectionReport: Selections, weights and traces; ``truncated`` when fewer than
        k non-degenerate candidates were available
    """
    pool = normalize_pool(oracle, affinity, candidates)

    def step(state, remaining, excluded, tally):
        return _greedy_step(state, oracle, affinity, remaining, tol_d, tol_d_scale, excluded, tally)

    state, trace, tally, truncated = run_greedy(k, pool, step, verify_inverse)
    config = {
        "k": k,
        "tol_d": tol_d,
        "tol_d_scale": tol_d_scale,
        "num_candidates": int(pool.size),
        "verify_inverse": verify_inverse,
    }
    return build_report(state, trace, affinity.test_self_term, tally.count, config, truncated, "sbq")


def quadrature_weights(state: InverseState, affinity: Optional[AffinityVector] = None) -> np.ndarray:
    """Weights w = K_SS^-1 z_S of the selected atoms."""
    if state.size == 0:
        raise ValueError("Quadrature weights need a nonempty selection")
    if affinity is None:
        return state.weights()
    return state.inv @ affinity.z[np.asarray(state.indices, dtype=np.int64)]


def posterior_variance(state: InverseState, affinity: AffinityVector) -> float:
    """Posterior variance mu_pp - g(S) of the quadrature estimate."""
    return float(affinity.test_self_term - state.objective)


def replay_state(oracle: BaseKernel, affinity: AffinityVector, selections: List[int]) -> InverseState:
    """Rebuild the greedy state for a given selection order (uncounted by selectors)."""
    state = InverseState.empty()
    for j in selections:
        b = oracle.train_block(state.indices, [j])[:, 0]
        c = float(oracle.train_diagonal([j])[0])
        state = extend_inverse(state, b, c, tol_d=0.0, index=j, z_value=float(affinity.z[j]))
    return state
