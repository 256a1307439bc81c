from typing import Dict, List, Sequence

import numpy as np
from scipy import stats
from sklearn.metrics import accuracy_score, log_loss

from protoquad.embedders.logistic import ParamVector
from protoquad.parsers.base import Dataset


class EvaluationMetrics:
    """Evaluation metrics for prototype-selection workflows."""

    @staticmethod
    def accuracy(params: ParamVector, data: Dataset) -> float:
        """Classification accuracy of a fitted model.

        Args:
            params (ParamVector): Fitted parameters
            data (Dataset): Labelled evaluation set

        Returns:
            float: Fraction of correct predictions
        """
        return float(accuracy_score(data.labels, params.predict(data.features)))

    @staticmethod
    def mean_log_likelihood(params: ParamVector, data: Dataset) -> float:
        """Average Bernoulli log-likelihood of the labels (nats per example)."""
        proba = params.predict_proba(data.features)
        return float(-log_loss(data.labels, proba, labels=[0, 1]))

    @staticmethod
    def fraction_fixed(order: Sequence[int], flipped: Sequence[int], budgets: Sequence[int]) -> List[float]:
        """Fraction of flipped labels found when inspecting the first b indices of ``order``.

        Args:
            order (Sequence[int]): Inspection order over candidate indices
            flipped (Sequence[int]): Indices whose labels were flipped
            budgets (Sequence[int]): Inspection budgets

        Returns:
            List[float]: One fraction per budget
        """
        flipped = set(int(i) for i in flipped)
        if not flipped:
            raise ValueError("No flipped labels to recover")
        hits = np.cumsum([int(i) in flipped for i in order])
        fractions = []
        for b in budgets:
            b = min(int(b), len(hits))
            fractions.append(float(hits[b - 1] / len(flipped)) if b > 0 else 0.0)
        return fractions

    @staticmethod
    def rank_agreement(first: Sequence[float], second: Sequence[float], top_k: int = 10) -> Dict[str, float]:
        """Spearman correlation and top-k overlap of two score vectors."""
        first = np.asarray(first, dtype=np.float64)
        second = np.asarray(second, dtype=np.float64)
        if first.shape != second.shape:
            raise ValueError("Score vectors must have the same length")
        top_k = min(top_k, first.size)
        top_first = set(np.argsort(-first, kind="stable")[:top_k].tolist())
        top_second = set(np.argsort(-second, kind="stable")[:top_k].tolist())
        if np.ptp(first) == 0 or np.ptp(second) == 0:
            rho = float("nan")
        else:
            rho = float(stats.spearmanr(first, second).correlation)
        return {"spearman": rho, "top_overlap": len(top_first & top_second) / top_k if top_k else 0.0}

