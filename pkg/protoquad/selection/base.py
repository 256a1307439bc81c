import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import linalg

from protoquad.exceptions import DegenerateCandidate

logger = logging.getLogger(__name__)

TOL_D_SCALE = 1e-10
INVERSE_TOL = 1e-8
METHODS = ("sbq", "mp", "stochastic", "distributed")


def default_tol_d(c: float, scale: float = TOL_D_SCALE) -> float:
    """Degeneracy threshold for a candidate with self-similarity c."""
    return scale * max(c, 1.0)


def tolerances(diag: np.ndarray, tol_d: Optional[float] = None, scale: float = TOL_D_SCALE) -> np.ndarray:
    """Per-candidate degeneracy thresholds; an absolute tol_d overrides the relative default."""
    if tol_d is not None:
        return np.full(diag.shape, float(tol_d))
    return scale * np.maximum(diag, 1.0)


class EvalTally:
    """Kernel evaluations charged to one selector run."""

    def __init__(self):
        self.count = 0

    def add(self, entries: int) -> None:
        self.count += int(entries)


class InverseState:
    """Greedy state: selected indices S, K_SS and its inverse, z_S and g(S) = z_S^T K_SS^-1 z_S."""

    def __init__(self, indices: Optional[List[int]] = None, inv=None, gram=None,
                 z_selected=None, objective: float = 0.0):
        self.indices = list(indices) if indices is not None else []
        size = len(self.indices)
        self.inv = np.zeros((0, 0)) if inv is None else np.asarray(inv, dtype=np.float64)
        self.gram = np.zeros((0, 0)) if gram is None else np.asarray(gram, dtype=np.float64)
        self.z_selected = np.zeros(0) if z_selected is None else np.asarray(z_selected, dtype=np.float64)
        if (self.inv.shape != (size, size) or self.gram.shape != (size, size)
                or self.z_selected.shape != (size,)):
            raise ValueError(f"Inconsistent inverse state for {size} selected indices")
        self.objective = float(objective)

    @classmethod
    def empty(cls) -> "InverseState":
        return cls()

    @property
    def size(self) -> int:
        return len(self.indices)

    def weights(self) -> np.ndarray:
        """Quadrature weights w = K_SS^-1 z_S."""
        return self.inv @ self.z_selected

    def inverse_residual(self) -> float:
        """Infinity norm of K_SS * inv - I."""
        if self.size == 0:
            return 0.0
        return float(np.max(np.abs(self.gram @ self.inv - np.eye(self.size))))

    def rebuild(self) -> "InverseState":
        """Recompute inv from K_SS by a dense Cholesky solve."""
        eye = np.eye(self.size)
        try:
            inv = linalg.cho_solve(linalg.cho_factor(self.gram, lower=True), eye)
        except linalg.LinAlgError:
            inv = linalg.pinvh(self.gram)
        inv = 0.5 * (inv + inv.T)
        objective = float(self.z_selected @ inv @ self.z_selected)
        return InverseState(self.indices, inv, self.gram, self.z_selected, objective)

    def prefix_objectives(self) -> List[float]:
        """g over each leading prefix of the selection, recomputed from the stored K_SS."""
        trace = []
        for size in range(1, self.size + 1):
            z = self.z_selected[:size]
            trace.append(float(z @ linalg.solve(self.gram[:size, :size], z, assume_a="sym")))
        return trace

    def __repr__(self) -> str:
        return f"InverseState(size={self.size}, objective={self.objective:.6g})"


def extend_inverse(state: InverseState, b, c: float, tol_d: Optional[float] = None,
                   index: Optional[int] = None, z_value: float = 0.0) -> InverseState:
    """Grow K_SS^-1 by one bordering row and column.

    With u = inv b and Schur complement d = c - b^T u the bordered inverse is
    [[inv + u u^T / d, -u / d], [-u^T / d, 1 / d]].

    Args:
        state (InverseState): Current state, left unchanged
        b (array-like): k(X_S, x_j), one entry per selected index
        c (float): k(x_j, x_j)
        tol_d (float): Degeneracy threshold; defaults to 1e-10 * max(c, 1)
        index (int): Index of the new atom; defaults to its position
        z_value (float): Affinity z_j of the new atom

    Returns:
        InverseState: State for S + [j]
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape[0] != state.size:
        raise ValueError(f"Border has {b.shape[0]} entries for {state.size} selected indices")
    if tol_d is None:
        tol_d = default_tol_d(c)

    u = state.inv @ b
    d = float(c - b @ u)
    if d <= tol_d:
        raise DegenerateCandidate(d, tol_d)

    size = state.size
    inv = np.empty((size + 1, size + 1))
    inv[:size, :size] = state.inv + np.outer(u, u) / d
    inv[:size, size] = -u / d
    inv[size, :size] = -u / d
    inv[size, size] = 1.0 / d

    gram = np.empty((size + 1, size + 1))
    gram[:size, :size] = state.gram
    gram[:size, size] = b
    gram[size, :size] = b
    gram[size, size] = c

    residual = z_value - u @ state.z_selected
    objective = state.objective + residual * residual / d
    return InverseState(
        state.indices + [size if index is None else int(index)],
        inv,
        gram,
        np.append(state.z_selected, z_value),
        objective,
    )


@dataclass
class SelectionReport:
    """Output of a selector, serialized as JSON."""

    selections: List[int]
    weights: List[float]
    objective_trace: List[float]
    variance_trace: List[float]
    kernel_evals: int
    config: Dict[str, Any]
    truncated: bool = False
    method: str = "sbq"
    seed: Optional[int] = None
    shard_stats: Optional[List[Dict[str, Any]]] = None

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else 0.0

    @property
    def variance(self) -> Optional[float]:
        return self.variance_trace[-1] if self.variance_trace else None

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        if self.shard_stats is None:
            payload.pop("shard_stats")
        return payload

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def save(self, file_path: str) -> None:
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SelectionReport":
        return cls(**payload)


@dataclass
class VariantConfig:
    """Selector choice and its parameters."""

    method: str = "sbq"
    k: int = 10
    delta: float = 0.1
    partitions: int = 2
    seed: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown selection method: {self.method} (choose from {', '.join(METHODS)})")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (0.0 < self.delta <= 1.0) or math.isnan(self.delta):
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.partitions < 1:
            raise ValueError(f"partitions must be >= 1, got {self.partitions}")


def build_report(state: InverseState, objective_trace: List[float], test_self_term: float,
                 kernel_evals: int, config: Dict[str, Any], truncated: bool, method: str,
                 seed: Optional[int] = None) -> SelectionReport:
    """Assemble a SelectionReport from a final greedy state."""
    return SelectionReport(
        selections=[int(i) for i in state.indices],
        weights=[float(w) for w in state.weights()],
        objective_trace=[float(g) for g in objective_trace],
        variance_trace=[float(test_self_term - g) for g in objective_trace],
        kernel_evals=int(kernel_evals),
        config=config,
        truncated=truncated,
        method=method,
        seed=seed,
    )


def partial_report(state: InverseState, test_self_term: float, kernel_evals: int,
                   method: str = "sbq") -> SelectionReport:
    """Truncated report of a selection that ran out of candidates."""
    config = {"k": state.size}
    return build_report(state, state.prefix_objectives(), test_self_term, kernel_evals, config, True, method)
