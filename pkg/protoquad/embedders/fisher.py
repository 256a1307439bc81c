import logging
import threading

import numpy as np
from scipy import linalg

from protoquad.embedders.base import GradientMatrix
from protoquad.exceptions import SingularMetricError

logger = logging.getLogger(__name__)

MODES = ("full", "practical")


class FisherMetric:
    """Estimated Fisher information with ridge, applied through a Cholesky factor.

    In ``practical`` mode the metric acts as the identity.
    """

    def __init__(self, info, ridge: float = 0.0, mode: str = "full", ridge_coeff: float = 0.0):
        """Initialize the metric.

        Args:
            info (array-like): p x p symmetric matrix, Fisher information plus ridge
            ridge (float): Absolute ridge that was added to the diagonal
            mode (str): "full" or "practical"
            ridge_coeff (float): Relative ridge coefficient the ridge was derived from
        """
        if mode not in MODES:
            raise ValueError(f"Unknown metric mode: {mode}")
        info = np.asarray(info, dtype=np.float64)
        if info.ndim != 2 or info.shape[0] != info.shape[1]:
            raise ValueError(f"Metric must be square, got shape {info.shape}")
        self.info = info
        self.ridge = ridge
        self.ridge_coeff = ridge_coeff
        self.mode = mode
        self._factor = None
        self._lock = threading.Lock()

    @property
    def param_dim(self) -> int:
        return self.info.shape[0]

    def _cholesky(self) -> np.ndarray:
        with self._lock:
            if self._factor is None:
                try:
                    self._factor = linalg.cholesky(self.info, lower=True)
                except linalg.LinAlgError:
                    eig = linalg.eigvalsh(self.info)
                    raise SingularMetricError(
                        f"Fisher metric is not positive definite: eigenvalues in "
                        f"[{eig[0]:.3e}, {eig[-1]:.3e}]; increase ridge_coeff "
                        f"(currently {self.ridge_coeff:g}) or use mode=practical"
                    )
            return self._factor

    def whiten(self, rows: np.ndarray) -> np.ndarray:
        """Map gradient rows f to h = L^-1 f with L L^T = info, so h_i . h_j = f_i^T info^-1 f_j."""
        rows = np.asarray(rows, dtype=np.float64)
        if self.mode == "practical":
            return rows.copy()
        if rows.shape[-1] != self.param_dim:
            raise ValueError(
                f"Gradient dimension {rows.shape[-1]} does not match metric dimension {self.param_dim}"
            )
        return linalg.solve_triangular(self._cholesky(), rows.T, lower=True).T

    def solve(self, vector: np.ndarray) -> np.ndarray:
        """Solve info u = v (identity in practical mode)."""
        vector = np.asarray(vector, dtype=np.float64)
        if self.mode == "practical":
            return vector.copy()
        return linalg.cho_solve((self._cholesky(), True), vector)

    def condition_number(self) -> float:
        if self.mode == "practical":
            return 1.0
        eig = linalg.eigvalsh(self.info)
        return float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")

    def scaled(self, factor: float) -> "FisherMetric":
        """Return the metric multiplied by a positive scalar."""
        return FisherMetric(self.info * factor, self.ridge * factor, self.mode, self.ridge_coeff)

    def __repr__(self) -> str:
        return f"FisherMetric(p={self.param_dim}, mode={self.mode}, ridge={self.ridge:.3e})"


def estimate_fisher_info(grads: GradientMatrix, ridge_coeff: float = 1e-6,
                         mode: str = "full") -> FisherMetric:
    """Empirical Fisher information over the training gradients.

    info = (1/n) G^T G + ridge_coeff * (trace / p) * I, the ridge being relative to the
    average diagonal entry so it does not depend on the gradient scale.

    Args:
        grads (GradientMatrix): Training-set gradients
        ridge_coeff (float): Relative ridge, >= 0
        mode (str): "full" or "practical"

    Returns:
        FisherMetric: The estimated metric
    """
    if ridge_coeff < 0:
        raise ValueError(f"ridge_coeff must be >= 0, got {ridge_coeff}")
    G = grads.rows
    n, p = G.shape
    base = (G.T @ G) / n
    base = 0.5 * (base + base.T)
    trace = float(np.trace(base))
    if mode == "full" and trace == 0.0:
        raise SingularMetricError(
            "All training gradients are zero; the Fisher metric is singular"
        )
    ridge = ridge_coeff * trace / p
    info = base + ridge * np.eye(p)
    logger.debug("Estimated Fisher information: p=%d, trace=%.3e, ridge=%.3e", p, trace, ridge)
    return FisherMetric(info, ridge=ridge, mode=mode, ridge_coeff=ridge_coeff)
