import threading
from abc import ABC, abstractmethod

import numpy as np


class BaseKernel(ABC):
    """Abstract base class for kernels over the candidate (training) pool.

    Every entry served through ``train_block`` or ``train_diagonal`` counts as one
    kernel evaluation; the counter is monotone and safe to bump from several threads.
    """

    def __init__(self):
        self._eval_count = 0
        self._count_lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def _count(self, entries: int) -> None:
        with self._count_lock:
            self._eval_count += int(entries)

    @property
    @abstractmethod
    def num_train(self) -> int:
        """Number of candidate atoms."""
        pass

    @abstractmethod
    def _train_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Kernel values k(train_r, train_c) for r in rows, c in cols (uncounted)."""
        pass

    def train_block(self, rows, cols) -> np.ndarray:
        """Kernel block between two lists of training indices.

        Args:
            rows (array-like): Training indices for the rows
            cols (array-like): Training indices for the columns

        Returns:
            np.ndarray: len(rows) x len(cols) matrix
        """
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        self._check(rows, self.num_train)
        self._check(cols, self.num_train)
        self._count(rows.size * cols.size)
        return self._train_entries(rows, cols)

    def _raw_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Kernel values computed without reading any materialized matrix (uncounted)."""
        return self._train_entries(rows, cols)

    def train_diagonal(self, indices) -> np.ndarray:
        """Self-similarities k(i, i) for the given training indices."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        self._check(indices, self.num_train)
        self._count(indices.size)
        return self._train_diagonal(indices)

    def _train_diagonal(self, indices: np.ndarray) -> np.ndarray:
        return np.array([self._train_entries(indices[i:i + 1], indices[i:i + 1])[0, 0]
                         for i in range(indices.size)])

    @staticmethod
    def _check(indices: np.ndarray, size: int) -> None:
        if indices.size and (indices.min() < 0 or indices.max() >= size):
            raise IndexError(f"Kernel index out of range [0, {size})")
