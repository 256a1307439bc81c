import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import expit
from sklearn.metrics.pairwise import rbf_kernel

from protoquad.exceptions import ExperimentError
from protoquad.parsers.base import Dataset
from protoquad.selection.influence import rank_descending
from protoquad.workflows.base import ExperimentConfig, ExperimentReport, build_oracle, fit_model, run_seeds

logger = logging.getLogger(__name__)

# the query is the label-1 point closest to this location
QUERY_LOCATION = (1.3, 1.7)
KERNELS = ("rbf", "fisher")


def make_square_data(n: int, seed: int = 0, slope: float = 8.0) -> Dataset:
    """Points uniform on [1, 2] x [1, 2], labelled 1 with probability sigmoid(slope * (x1 - x0)).

    The generating boundary is the diagonal; label 1 lies above it.
    """
    rng = np.random.default_rng([seed, 3])
    points = rng.uniform(1.0, 2.0, size=(n, 2))
    labels = (rng.random(n) < expit(slope * (points[:, 1] - points[:, 0]))).astype(np.int64)
    return Dataset(points, labels)


def pick_query(data: Dataset, location: Sequence[float] = QUERY_LOCATION) -> int:
    """Index of the label-1 point nearest to ``location``."""
    positives = np.flatnonzero(data.labels == 1)
    if positives.size == 0:
        raise ExperimentError("No label-1 point to use as the query")
    distances = np.linalg.norm(data.features[positives] - np.asarray(location), axis=1)
    return int(positives[np.argmin(distances)])


@dataclass
class NeighbourSets:
    """Most and least similar points to one query under one kernel, most extreme first."""

    kernel: str
    query: int
    nearest: np.ndarray
    farthest: np.ndarray

    def overlap(self, other: "NeighbourSets") -> Tuple[float, float]:
        """Shared fraction of the nearest sets and of the farthest sets."""
        count = max(self.nearest.size, 1)
        return (np.intersect1d(self.nearest, other.nearest).size / count,
                np.intersect1d(self.farthest, other.farthest).size / count)


def _extremes(kernel: str, query: int, similarity: np.ndarray, count: int) -> NeighbourSets:
    others = np.delete(np.arange(similarity.size), query)
    ranked = others[rank_descending(similarity[others])]
    return NeighbourSets(kernel, query, ranked[:count], ranked[::-1][:count])


def neighbour_sets(config: ExperimentConfig, data: Dataset, query: int) -> Dict[str, NeighbourSets]:
    """Nearest and farthest ``config.n_neighbours`` points to ``query`` under both kernels.

    The RBF ranking depends on Euclidean distance alone, so its bandwidth is irrelevant. The
    Fisher similarity comes from a logistic model fitted on ``data``, with the query embedded
    under its own label.

    Args:
        config (ExperimentConfig): Supplies ``n_neighbours``, ``l2``, ``mode`` and ``ridge_coeff``
        data (Dataset): Labelled points
        query (int): Index of the query point in ``data``

    Returns:
        Dict[str, NeighbourSets]: Keyed by "rbf" and "fisher"
    """
    count = min(config.n_neighbours, data.n - 1)
    rbf = rbf_kernel(data.features, data.features[[query]], gamma=1.0)[:, 0]

    params = fit_model(config, data)
    if not params.converged:
        logger.warning("Logistic fit on the square data stopped before convergence")
    oracle, _ = build_oracle(params, data, data.subset([query]), config.mode, config.ridge_coeff)
    fisher = oracle.test_block(np.arange(data.n), [0])[:, 0]
    return {
        "rbf": _extremes("rbf", query, rbf, count),
        "fisher": _extremes("fisher", query, fisher, count),
    }


def neighbours_one_seed(config: ExperimentConfig, seed: int) -> ExperimentReport:
    report = ExperimentReport(config.task, config.to_dict())
    data = make_square_data(config.toy_points, seed)
    query = pick_query(data)
    sets = neighbour_sets(config, data, query)
    count = sets["rbf"].nearest.size
    for name in KERNELS:
        for side in ("nearest", "farthest"):
            members = getattr(sets[name], side)
            same = float(np.mean(data.labels[members] == data.labels[query]))
            report.add(name, count, f"{side}_same_label", seed, same)
    nearest, farthest = sets["fisher"].overlap(sets["rbf"])
    report.add("fisher", count, "nearest_overlap", seed, nearest)
    report.add("fisher", count, "farthest_overlap", seed, farthest)
    logger.info("seed %d: Fisher and RBF share %.0f%% of nearest and %.0f%% of farthest neighbours",
                seed, 100 * nearest, 100 * farthest)
    return report


def run_neighbours(config: ExperimentConfig) -> ExperimentReport:
    """Compare the neighbourhoods of a query point under an RBF kernel and the Fisher kernel.

    Args:
        config (ExperimentConfig): Workflow parameters with ``task="neighbours"``

    Returns:
        ExperimentReport: Same-label fractions per kernel and the Fisher/RBF overlaps, budget
            being the neighbourhood size
    """
    return run_seeds(config, neighbours_one_seed)
