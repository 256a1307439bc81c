from typing import List, Optional

import numpy as np
import pandas as pd

from protoquad.exceptions import DataFormatError
from protoquad.parsers.base import BaseLoader, Dataset, split_sizes

LABEL_COLUMN = "label"
ID_COLUMN = "id"


class CsvLoader(BaseLoader):
    """CSV datasets: header row, a `label` column with 0/1 values, numeric feature columns.

    An optional `id` column supplies example identifiers; otherwise ids are row numbers.
    Feature columns keep their header order.
    """

    def __init__(self, require_labels: bool = True):
        """Initialize the loader.

        Args:
            require_labels (bool): Fail when the `label` column is missing
        """
        self.require_labels = require_labels

    def load(self, file_path: str) -> Dataset:
        """Load a CSV dataset.

        Args:
            file_path (str): Path to the CSV file

        Returns:
            Dataset: Parsed dataset with row order preserved
        """
        try:
            frame = pd.read_csv(file_path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise DataFormatError(f"{file_path}: file is empty")
        except (OSError, pd.errors.ParserError) as e:
            raise DataFormatError(f"{file_path}: {e}")

        if frame.shape[0] == 0:
            raise DataFormatError(f"{file_path}: no data rows")

        columns = [c.strip() for c in frame.columns]
        frame.columns = columns
        if self.require_labels and LABEL_COLUMN not in columns:
            raise DataFormatError(f"{file_path}: missing '{LABEL_COLUMN}' column")

        ids = frame[ID_COLUMN].tolist() if ID_COLUMN in columns else None
        feature_columns = [c for c in columns if c not in (LABEL_COLUMN, ID_COLUMN)]
        if not feature_columns:
            raise DataFormatError(f"{file_path}: no feature columns")

        numeric_columns = feature_columns + ([LABEL_COLUMN] if LABEL_COLUMN in columns else [])
        numeric = _to_numeric(frame[numeric_columns], file_path)

        labels = None
        if LABEL_COLUMN in columns:
            labels = numeric[LABEL_COLUMN].to_numpy()
            bad = np.flatnonzero((labels != 0) & (labels != 1))
            if bad.size:
                raise DataFormatError(
                    f"{file_path}: row {bad[0]} (line {bad[0] + 2}) has label "
                    f"{frame[LABEL_COLUMN].iloc[bad[0]]!r}, expected 0 or 1"
                )
        return Dataset(numeric[feature_columns].to_numpy(dtype=np.float64), labels, ids)

    def save(self, dataset: Dataset, file_path: str) -> None:
        """Write a dataset in the format `load` reads back losslessly.

        Args:
            dataset (Dataset): Dataset to write
            file_path (str): Destination path
        """
        frame = pd.DataFrame(
            dataset.features, columns=[f"f{j + 1}" for j in range(dataset.d)]
        )
        if dataset.has_labels:
            frame.insert(0, LABEL_COLUMN, dataset.labels)
        if dataset.ids != list(range(dataset.n)):
            frame.insert(0, ID_COLUMN, dataset.ids)
        frame.to_csv(file_path, index=False, float_format="%.17g", encoding="utf-8")


def _to_numeric(frame: pd.DataFrame, file_path: str) -> pd.DataFrame:
    converted = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = converted.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(
            f"{file_path}: row {row} (line {row + 2}), column '{frame.columns[col]}' "
            f"has non-numeric value {frame.iat[row, col]!r}"
        )
    values = converted.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(
            f"{file_path}: row {row} (line {row + 2}), column '{frame.columns[col]}' is not finite"
        )
    return converted


def load_dataset(file_path: str, require_labels: bool = True) -> Dataset:
    """Load a CSV dataset (see CsvLoader)."""
    return CsvLoader(require_labels=require_labels).load(file_path)


def save_dataset(dataset: Dataset, file_path: str) -> None:
    """Save a dataset as CSV (see CsvLoader)."""
    CsvLoader().save(dataset, file_path)


def split_dataset(dataset: Dataset, sizes: List[int], seed: Optional[int] = 0) -> List[Dataset]:
    """Split a dataset by a seeded permutation.

    Args:
        dataset (Dataset): Dataset to split
        sizes (List[int]): Split sizes in order; one entry may be -1 for "the rest"
        seed (int): Permutation seed

    Returns:
        List[Dataset]: One dataset per requested size
    """
    resolved = split_sizes(dataset.n, list(sizes))
    order = np.random.default_rng(seed).permutation(dataset.n)
    parts = []
    start = 0
    for size in resolved:
        parts.append(dataset.subset(order[start:start + size]))
        start += size
    return parts
