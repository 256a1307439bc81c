from abc import ABC, abstractmethod

import numpy as np

from protoquad.exceptions import DataFormatError
from protoquad.parsers.base import Dataset


class GradientMatrix:
    """Fisher embedding: row i is the gradient of example i's log-likelihood at the fit."""

    def __init__(self, rows):
        """Initialize the gradient matrix.

        Args:
            rows (array-like): n x p real matrix
        """
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DataFormatError(f"Gradient matrix must be non-empty 2-d, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            row, col = np.argwhere(~np.isfinite(rows))[0]
            raise DataFormatError(f"Non-finite gradient entry at row {row}, column {col}")
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def param_dim(self) -> int:
        return self.rows.shape[1]

    def subset(self, indices) -> "GradientMatrix":
        return GradientMatrix(self.rows[np.asarray(indices, dtype=np.int64)])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"GradientMatrix(n={self.n}, param_dim={self.param_dim})"


class BaseEmbedder(ABC):
    """Abstract base class for Fisher embedders."""

    @abstractmethod
    def fit(self, dataset: Dataset) -> "BaseEmbedder":
        """Fit the underlying model on the training set.

        Args:
            dataset (Dataset): Training set

        Returns:
            BaseEmbedder: self
        """
        pass

    @abstractmethod
    def embed(self, dataset: Dataset) -> GradientMatrix:
        """Embed examples as per-example log-likelihood gradients at the fitted parameters.

        Args:
            dataset (Dataset): Examples to embed

        Returns:
            GradientMatrix: One gradient row per example
        """
        pass
