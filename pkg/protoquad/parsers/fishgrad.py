"""FISHGRAD text format for gradient embeddings of external models.

    FISHGRAD 1 <n> <p>
    <p space-separated floats>   (n lines)
"""

import numpy as np

from protoquad.embedders.base import GradientMatrix
from protoquad.exceptions import DataFormatError

MAGIC = "FISHGRAD"
VERSION = "1"


def save_embeddings(grads: GradientMatrix, file_path: str) -> None:
    """Write gradients with 17 significant digits, which round-trips float64 exactly.

    Args:
        grads (GradientMatrix): Gradients to write
        file_path (str): Destination path
    """
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(f"{MAGIC} {VERSION} {grads.n} {grads.param_dim}\n")
        for row in grads.rows:
            f.write(" ".join(format(v, ".17g") for v in row))
            f.write("\n")


def load_embeddings(file_path: str) -> GradientMatrix:
    """Read a FISHGRAD file.

    Args:
        file_path (str): Path to the file

    Returns:
        GradientMatrix: Parsed gradients
    """
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            lines = [line for line in f.read().splitlines() if line.strip()]
    except OSError as e:
        raise DataFormatError(f"{file_path}: {e}")

    if not lines:
        raise DataFormatError(f"{file_path}: file is empty")
    header = lines[0].split()
    if len(header) != 4 or header[0] != MAGIC:
        raise DataFormatError(f"{file_path}: expected header '{MAGIC} {VERSION} <n> <p>'")
    if header[1] != VERSION:
        raise DataFormatError(f"{file_path}: unsupported version {header[1]}")
    try:
        n, p = int(header[2]), int(header[3])
    except ValueError:
        raise DataFormatError(f"{file_path}: header counts must be integers")
    if n < 1 or p < 1:
        raise DataFormatError(f"{file_path}: header declares an empty matrix ({n} x {p})")

    body = lines[1:]
    if len(body) != n:
        raise DataFormatError(f"{file_path}: header declares {n} rows, found {len(body)}")

    rows = np.empty((n, p), dtype=np.float64)
    for i, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != p:
            raise DataFormatError(
                f"{file_path}: row {i} (line {i + 2}) has {len(tokens)} values, expected {p}"
            )
        try:
            rows[i] = [float(t) for t in tokens]
        except ValueError as e:
            raise DataFormatError(f"{file_path}: row {i} (line {i + 2}): {e}")
        if not np.all(np.isfinite(rows[i])):
            raise DataFormatError(f"{file_path}: row {i} (line {i + 2}) has a non-finite value")
    return GradientMatrix(rows)
