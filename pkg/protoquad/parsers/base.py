from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

import numpy as np

from protoquad.exceptions import DataFormatError


class Dataset:
    """Binary-labelled examples: an n x d feature matrix, labels and stable ids."""

    def __init__(self, features, labels=None, ids: Optional[Sequence] = None):
        """Initialize and validate a dataset.

        Args:
            features (array-like): n x d real matrix
            labels (array-like): length-n sequence of 0/1 labels, or None when unlabelled
            ids (Sequence): stable example identifiers (defaults to row numbers)
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataFormatError(f"Features must be a non-empty 2-d matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            row, col = np.argwhere(~np.isfinite(features))[0]
            raise DataFormatError(f"Non-finite feature at row {row}, column {col}")

        if labels is not None:
            labels = np.asarray(labels, dtype=np.float64).reshape(-1)
            if labels.shape[0] != features.shape[0]:
                raise DataFormatError(
                    f"{labels.shape[0]} labels for {features.shape[0]} feature rows"
                )
            bad = np.flatnonzero((labels != 0) & (labels != 1))
            if bad.size:
                raise DataFormatError(f"Label {labels[bad[0]]!r} at row {bad[0]} is not 0 or 1")
            labels = labels.astype(np.int64)

        if ids is None:
            ids = list(range(features.shape[0]))
        elif len(ids) != features.shape[0]:
            raise DataFormatError(f"{len(ids)} ids for {features.shape[0]} feature rows")

        self.features = features
        self.labels = labels
        self.ids = list(ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices) -> "Dataset":
        """Return the examples at the given positions, in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.features[indices], labels, [self.ids[i] for i in indices])

    def drop(self, indices) -> "Dataset":
        """Return a copy without the examples at the given positions."""
        keep = np.setdiff1d(np.arange(self.n), np.asarray(indices, dtype=np.int64))
        return self.subset(keep)

    def with_labels(self, labels) -> "Dataset":
        """Return a copy carrying the given labels."""
        return Dataset(self.features, labels, self.ids)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, d={self.d}, labelled={self.has_labels})"


class BaseLoader(ABC):
    """Abstract base class for dataset loaders."""

    @abstractmethod
    def load(self, file_path: str) -> Dataset:
        """Load a dataset file.

        Args:
            file_path (str): Path to the file

        Returns:
            Dataset: Parsed dataset
        """
        pass

    @abstractmethod
    def save(self, dataset: Dataset, file_path: str) -> None:
        """Write a dataset file.

        Args:
            dataset (Dataset): Dataset to write
            file_path (str): Destination path
        """
        pass


def split_sizes(n: int, sizes: List[int]) -> List[int]:
    """Resolve split sizes where a single -1 entry takes the remainder."""
    if sizes.count(-1) > 1:
        raise ValueError("At most one split size may be -1")
    fixed = sum(s for s in sizes if s != -1)
    if fixed > n or any(s < -1 for s in sizes):
        raise ValueError(f"Split sizes {sizes} do not fit {n} examples")
    return [n - fixed if s == -1 else s for s in sizes]
