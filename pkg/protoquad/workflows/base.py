import concurrent.futures
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from protoquad.embedders.fisher import estimate_fisher_info
from protoquad.embedders.logistic import ParamVector, per_example_gradients, train_logistic
from protoquad.exceptions import ExperimentError, TrainingError
from protoquad.kernels.fisher import AffinityVector, KernelOracle, affinity_vector
from protoquad.parsers.base import Dataset
from protoquad.parsers.tabular import load_dataset, split_dataset
from protoquad.selection.influence import rank_descending
from protoquad.selection.universal import UniversalSelector

logger = logging.getLogger(__name__)

TASKS = ("clean", "mislabel", "summarize", "neighbours")
BASELINES = ("random", "self_influence")
NOISE_MODES = ("uniform", "targeted")
EXTENSIONS = ("affinity", "restart")
WEIGHTINGS = ("none", "clipped", "matched")
DIRECTIONS = ("any", "harmful")
CSV_COLUMNS = ["method", "budget", "metric", "seed", "value"]

TASK_DEFAULTS = {
    "clean": {"noise_mode": "targeted", "extension": "affinity", "direction": "harmful"},
    "mislabel": {"noise_mode": "uniform", "extension": "affinity", "direction": "harmful"},
    "summarize": {"noise_mode": "uniform", "extension": "restart", "direction": "any"},
    "neighbours": {"noise_mode": "uniform", "extension": "restart", "direction": "any"},
}


@dataclass
class ExperimentConfig:
    """Parameters of one workflow run; every field has a desk-scale default."""

    task: str
    dataset: Optional[str] = None
    n_train: int = 1000
    n_val: int = 300
    n_test: int = 1000
    n_features: int = 5
    weight_scale: float = 2.0
    flip_fraction: float = 0.2
    curated_fraction: float = 0.12
    noise_fraction: float = 0.05
    noise_mode: Optional[str] = None
    removal_counts: List[int] = field(default_factory=lambda: [0, 25, 50, 100])
    inspect_fractions: List[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.5, 1.0])
    subset_sizes: List[int] = field(default_factory=lambda: [50, 100, 200])
    method: str = "sbq"
    delta: float = 0.1
    partitions: int = 2
    mode: str = "full"
    ridge_coeff: float = 1e-6
    l2: float = 1e-2
    baselines: List[str] = field(default_factory=lambda: list(BASELINES))
    seeds: List[int] = field(default_factory=lambda: [0])
    extension: Optional[str] = None
    direction: Optional[str] = None
    weighting: str = "matched"
    curated_indices: Optional[List[int]] = None
    toy_points: int = 1200
    n_neighbours: int = 40
    threads: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ExperimentError(f"Unknown task: {self.task} (choose from {', '.join(TASKS)})")
        defaults = TASK_DEFAULTS[self.task]
        if self.noise_mode is None:
            self.noise_mode = defaults["noise_mode"]
        if self.extension is None:
            self.extension = defaults["extension"]
        if self.direction is None:
            self.direction = defaults["direction"]
        if self.direction not in DIRECTIONS:
            raise ExperimentError(f"Unknown direction: {self.direction}")
        if self.noise_mode not in NOISE_MODES:
            raise ExperimentError(f"Unknown noise mode: {self.noise_mode}")
        if self.extension not in EXTENSIONS:
            raise ExperimentError(f"Unknown extension strategy: {self.extension}")
        if self.weighting not in WEIGHTINGS:
            raise ExperimentError(f"Unknown weighting: {self.weighting}")
        for name in ("flip_fraction", "curated_fraction", "noise_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ExperimentError(f"{name} must be in [0, 1), got {value}")
        if any(c < 0 for c in self.removal_counts):
            raise ExperimentError("removal_counts must be nonnegative")
        if any(s < 1 for s in self.subset_sizes):
            raise ExperimentError("subset_sizes must be positive")
        if any(not 0.0 < f <= 1.0 for f in self.inspect_fractions):
            raise ExperimentError("inspect_fractions must be in (0, 1]")
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ExperimentError(f"Unknown baselines: {sorted(unknown)}")
        if not self.seeds:
            raise ExperimentError("At least one seed is required")
        if self.mode not in ("full", "practical"):
            raise ExperimentError(f"Unknown mode: {self.mode}")
        if self.n_neighbours < 1 or self.toy_points <= self.n_neighbours:
            raise ExperimentError("toy_points must exceed n_neighbours, which must be positive")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ExperimentError(f"Unknown experiment config keys: {sorted(unknown)}")
        if "task" not in payload:
            raise ExperimentError("Experiment config needs a 'task'")
        return cls(**payload)

    @classmethod
    def from_json(cls, file_path: str) -> "ExperimentConfig":
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ExperimentError(f"Cannot read experiment config {file_path}: {e}")
        if not isinstance(payload, dict):
            raise ExperimentError(f"{file_path}: experiment config must be a JSON object")
        return cls.from_dict(payload)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ExperimentReport:
    """Curves of one workflow run in long format: one record per (method, budget, metric, seed)."""

    task: str
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    references: List[Dict[str, Any]] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def add(self, method: str, budget: int, metric: str, seed: int, value: float) -> None:
        self.records.append({"method": method, "budget": int(budget), "metric": metric,
                             "seed": int(seed), "value": float(value)})

    def add_reference(self, name: str, metric: str, seed: int, value: float) -> None:
        self.references.append({"name": name, "metric": metric, "seed": int(seed), "value": float(value)})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=CSV_COLUMNS)

    def methods(self) -> List[str]:
        return sorted({r["method"] for r in self.records})

    def curve(self, method: str, metric: str) -> Dict[int, float]:
        """Median value across seeds at each budget."""
        frame = self.to_frame()
        rows = frame[(frame["method"] == method) & (frame["metric"] == metric)]
        medians = rows.groupby("budget")["value"].median()
        return {int(b): float(v) for b, v in medians.items()}

    def values(self, method: str, metric: str, budget: int) -> List[float]:
        """Per-seed values at one budget, ordered by seed."""
        rows = [r for r in self.records
                if r["method"] == method and r["metric"] == metric and r["budget"] == budget]
        return [r["value"] for r in sorted(rows, key=lambda r: r["seed"])]

    def reference(self, name: str, metric: str) -> List[float]:
        rows = [r for r in self.references if r["name"] == name and r["metric"] == metric]
        return [r["value"] for r in sorted(rows, key=lambda r: r["seed"])]

    def merge(self, other: "ExperimentReport") -> None:
        self.records.extend(other.records)
        self.references.extend(other.references)
        self.flags.extend(other.flags)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def save_json(self, file_path: str) -> None:
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")

    def save_csv(self, file_path: str) -> None:
        self.to_frame().to_csv(file_path, index=False, float_format="%.17g", encoding="utf-8")


def make_logistic_data(n: int, d: int, seed: int = 0, weight_scale: float = 2.0,
                       intercept: float = 0.0) -> Tuple[Dataset, np.ndarray]:
    """Draw a well-specified logistic-regression dataset.

    Features are standard normal; labels are Bernoulli(sigmoid(x^T w + intercept)). The
    first weight is made positive so feature 0 always points toward label 1.

    Returns:
        Tuple[Dataset, np.ndarray]: Dataset and the true weights (intercept last)
    """
    rng = np.random.default_rng(seed)
    weights = rng.normal(scale=weight_scale, size=d)
    weights[0] = abs(weights[0]) + weight_scale
    features = rng.normal(size=(n, d))
    proba = expit(features @ weights + intercept)
    labels = (rng.random(n) < proba).astype(np.int64)
    return Dataset(features, labels), np.append(weights, intercept)


def plant_label_noise(dataset: Dataset, fraction: float, mode: str = "uniform", seed: int = 0,
                      protected: Optional[Sequence[int]] = None) -> Tuple[Dataset, np.ndarray]:
    """Flip a fraction of the labels.

    ``uniform`` flips a seeded random subset; ``targeted`` flips the label-1 examples with
    the largest value of feature 0, biasing the model in that region.

    Args:
        dataset (Dataset): Labelled dataset
        fraction (float): Fraction of all examples to flip
        mode (str): "uniform" or "targeted"
        seed (int): Seed for uniform flips
        protected (Sequence[int]): Indices that must keep their labels

    Returns:
        Tuple[Dataset, np.ndarray]: Noisy copy and the sorted flipped indices
    """
    if not dataset.has_labels:
        raise ExperimentError("Label noise needs a labelled dataset")
    count = int(round(fraction * dataset.n))
    eligible = np.ones(dataset.n, dtype=bool)
    if protected is not None:
        eligible[np.asarray(protected, dtype=np.int64)] = False

    if mode == "uniform":
        pool = np.flatnonzero(eligible)
        count = min(count, pool.size)
        flipped = np.random.default_rng(seed).choice(pool, size=count, replace=False)
    elif mode == "targeted":
        pool = np.flatnonzero(eligible & (dataset.labels == 1))
        count = min(count, pool.size)
        order = pool[np.argsort(-dataset.features[pool, 0], kind="stable")]
        flipped = order[:count]
    else:
        raise ExperimentError(f"Unknown noise mode: {mode}")

    flipped = np.sort(flipped)
    labels = dataset.labels.copy()
    labels[flipped] = 1 - labels[flipped]
    return dataset.with_labels(labels), flipped


def load_splits(config: ExperimentConfig, seed: int) -> Tuple[Dataset, Dataset, Dataset]:
    """Train, validation and test sets from the configured file or the synthetic generator."""
    sizes = [config.n_train, config.n_val, config.n_test]
    if config.dataset:
        data = load_dataset(config.dataset)
    else:
        data, _ = make_logistic_data(sum(s for s in sizes if s > 0), config.n_features, seed,
                                     config.weight_scale)
    try:
        train, val, test = split_dataset(data, sizes, seed)
    except ValueError as e:
        raise ExperimentError(str(e))
    return train, val, test


def fit_model(config: ExperimentConfig, data: Dataset, sample_weight=None) -> ParamVector:
    return train_logistic(data, l2=config.l2, sample_weight=sample_weight)


def build_oracle(params: ParamVector, train: Dataset, target: Dataset, mode: str = "full",
                 ridge_coeff: float = 1e-6) -> Tuple[KernelOracle, AffinityVector]:
    """Fisher kernel over the training set against the target set's mean embedding.

    The metric is estimated from every training gradient; targets are embedded with their
    own labels.
    """
    train_grads = per_example_gradients(params, train)
    target_grads = per_example_gradients(params, target)
    metric = estimate_fisher_info(train_grads, ridge_coeff=ridge_coeff, mode=mode)
    oracle = KernelOracle(train_grads, target_grads, metric)
    return oracle, affinity_vector(oracle)


def make_selector(config: ExperimentConfig, seed: int) -> UniversalSelector:
    return UniversalSelector(method=config.method, k=1, delta=config.delta,
                             partitions=config.partitions, seed=seed, threads=config.threads)


def _greedy_order(selector, oracle, affinity, pool: np.ndarray, needed: int, extension: str,
                  keys: np.ndarray) -> List[int]:
    needed = min(needed, pool.size)
    if needed <= 0:
        return []
    order: List[int] = list(selector.select(oracle, affinity, pool, k=needed).selections)

    if extension == "restart":
        while len(order) < needed:
            remaining = pool[~np.isin(pool, order)]
            picked = selector.select(oracle, affinity, remaining, k=needed - len(order)).selections
            if not picked:
                break
            order.extend(picked)

    if len(order) < needed:
        remaining = pool[~np.isin(pool, order)]
        ranked = remaining[rank_descending(keys[remaining])]
        order.extend(int(i) for i in ranked[:needed - len(order)])
    return [int(i) for i in order[:needed]]


def selection_order(selector: UniversalSelector, oracle: KernelOracle, affinity: AffinityVector,
                    candidates: Sequence[int], needed: int, extension: str = "affinity",
                    direction: str = "any") -> List[int]:
    """Order ``needed`` candidates by the selector, extending past pool exhaustion.

    The Fisher kernel has rank at most the parameter dimension, so greedy selection stops
    after about that many atoms. ``affinity`` then appends the remaining candidates by
    affinity; ``restart`` runs further greedy rounds over the unselected candidates first.

    With targets embedded under their true labels, z_i < 0 means upweighting training point
    i lowers the targets' log-likelihood. ``harmful`` runs the selector only over those
    candidates and ranks by ascending z; ``any`` uses every candidate and ranks by |z|.

    Args:
        selector (UniversalSelector): Greedy selector
        oracle (KernelOracle): Kernel over the training set
        affinity (AffinityVector): Affinity to the targets
        candidates (Sequence[int]): Training indices that may be picked
        needed (int): Length of the order, capped at the number of candidates
        extension (str): "affinity" or "restart"
        direction (str): "any" or "harmful"

    Returns:
        List[int]: Ordered training indices
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    needed = min(needed, candidates.size)
    if direction == "any":
        return _greedy_order(selector, oracle, affinity, candidates, needed, extension,
                             np.abs(affinity.z))
    if direction != "harmful":
        raise ExperimentError(f"Unknown direction: {direction}")

    harmful = candidates[affinity.z[candidates] < 0]
    order = _greedy_order(selector, oracle, affinity, harmful, needed, extension, -affinity.z)
    if len(order) < needed:
        rest = candidates[~np.isin(candidates, order)]
        order.extend(int(i) for i in rest[rank_descending(-affinity.z[rest])][:needed - len(order)])
    return order


def baseline_order(name: str, oracle: KernelOracle, candidates: Sequence[int], seed: int) -> List[int]:
    """Random order, or self-influence order by descending k(i, i)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if name == "random":
        return [int(i) for i in np.random.default_rng([seed, 1]).permutation(candidates)]
    if name == "self_influence":
        diag = oracle.train_diagonal(candidates)
        return [int(i) for i in candidates[rank_descending(diag)]]
    raise ExperimentError(f"Unknown baseline: {name}")


def fit_or_flag(config: ExperimentConfig, data: Dataset, report: ExperimentReport,
                label: str, sample_weight=None) -> Optional[ParamVector]:
    """Fit on ``data`` and flag non-convergence; None when the fit is degenerate."""
    try:
        params = fit_model(config, data, sample_weight)
    except TrainingError as e:
        logger.warning("Skipping %s: %s", label, e)
        report.flags.append(f"{label}: {e}")
        return None
    if not params.converged:
        report.flags.append(f"{label}: retrain did not converge")
    return params


def run_seeds(config: ExperimentConfig, run_one) -> ExperimentReport:
    """Run one workflow per seed (in parallel when threads > 1) and merge in seed order."""
    report = ExperimentReport(config.task, config.to_dict())
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, config.threads)) as executor:
        for part in executor.map(lambda seed: run_one(config, seed), config.seeds):
            report.merge(part)
    return report
