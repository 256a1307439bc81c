import numpy as np

from protoquad.kernels.base import BaseKernel


class PrecomputedKernel(BaseKernel):
    """Kernel over the candidate pool given as an explicit symmetric matrix."""

    def __init__(self, matrix):
        """Initialize the kernel.

        Args:
            matrix (array-like): t x t symmetric matrix
        """
        super().__init__()
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
            raise ValueError(f"Kernel matrix must be square and non-empty, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Kernel matrix has non-finite entries")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(matrix).max())):
            raise ValueError("Kernel matrix is not symmetric")
        self.matrix = matrix

    @property
    def num_train(self) -> int:
        return self.matrix.shape[0]

    def _train_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.matrix[np.ix_(rows, cols)]

    def _train_diagonal(self, indices: np.ndarray) -> np.ndarray:
        return np.diag(self.matrix)[indices]

    def __repr__(self) -> str:
        return f"PrecomputedKernel(t={self.num_train}, evals={self.eval_count})"
