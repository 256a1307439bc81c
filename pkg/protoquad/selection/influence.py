"""Influence-function attribution as a Fisher-kernel evaluation.

With the negative log-likelihood as loss, the Hessian at the optimum is approximated by
the empirical gradient Gram, so the influence of training point i on test point j,
grad_i^T H^-1 grad_j, is the full-mode kernel k(i, test_j).
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List

import numpy as np

from protoquad.evaluation.metrics import EvaluationMetrics
from protoquad.kernels.fisher import KernelOracle

logger = logging.getLogger(__name__)


def rank_descending(scores) -> np.ndarray:
    """Indices ordered by descending score; equal scores keep ascending index order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def influence_scores(oracle: KernelOracle, test_index: int) -> np.ndarray:
    """Influence of every training point on one test point.

    Args:
        oracle (KernelOracle): Full-mode oracle whose metric is the training-gradient Gram
        test_index (int): Test point to explain

    Returns:
        np.ndarray: score(i) = k(train_i, test_j)
    """
    if oracle.mode != "full":
        logger.warning("Influence scores with mode=%s drop the inverse Hessian", oracle.mode)
    return oracle.test_block(np.arange(oracle.num_train), [test_index])[:, 0]


def one_step_sbq_scores(oracle: KernelOracle, test_index: int) -> np.ndarray:
    """Single-step greedy objective against one test point: k(i, test_j)^2 / k(i, i)."""
    z = oracle.test_block(np.arange(oracle.num_train), [test_index])[:, 0]
    diag = oracle.train_diagonal(np.arange(oracle.num_train))
    scores = np.zeros_like(z)
    positive = diag > 0
    scores[positive] = z[positive] ** 2 / diag[positive]
    return scores


@dataclass
class InfluenceReport:
    """Both rankings for one test point and how well they agree."""

    test_index: int
    top_influence: List[int]
    top_sbq: List[int]
    influence_scores: List[float]
    sbq_scores: List[float]
    spearman: float
    top_overlap: float
    kernel_evals: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def influence_report(oracle: KernelOracle, test_index: int, k: int = 10) -> InfluenceReport:
    """Compare the influence ranking with the one-step greedy ranking for a test point.

    Args:
        oracle (KernelOracle): Full-mode oracle
        test_index (int): Test point to explain
        k (int): Length of the reported top lists

    Returns:
        InfluenceReport: Top-k of both rankings, Spearman correlation of the scores and
        the fraction of shared top-k indices
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    before = oracle.eval_count
    influence = influence_scores(oracle, test_index)
    sbq = one_step_sbq_scores(oracle, test_index)
    k = min(k, influence.size)
    top_influence = rank_descending(influence)[:k]
    top_sbq = rank_descending(sbq)[:k]

    agreement = EvaluationMetrics.rank_agreement(influence, sbq, k)
    return InfluenceReport(
        test_index=int(test_index),
        top_influence=[int(i) for i in top_influence],
        top_sbq=[int(i) for i in top_sbq],
        influence_scores=[float(s) for s in influence],
        sbq_scores=[float(s) for s in sbq],
        spearman=agreement["spearman"],
        top_overlap=float(agreement["top_overlap"]),
        kernel_evals=oracle.eval_count - before,
    )
