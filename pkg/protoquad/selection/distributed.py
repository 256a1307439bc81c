"""Partitioned greedy selection.

Round one shuffles the pool into ``partitions`` shards and runs greedy selection on each
shard independently, so no kernel entry between two shards is ever evaluated. Round two
runs greedy selection over the union of the shard selections. The better of the merged
solution and the best shard solution is returned.
"""

import concurrent.futures
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from protoquad.kernels.base import BaseKernel
from protoquad.kernels.fisher import AffinityVector
from protoquad.kernels.shard import ShardKernel
from protoquad.selection.base import TOL_D_SCALE, SelectionReport
from protoquad.selection.sbq import normalize_pool, select_sbq

logger = logging.getLogger(__name__)


def partition_pool(pool: np.ndarray, partitions: int, seed: int) -> List[np.ndarray]:
    """Shuffle the pool with a seeded generator and split it into nearly equal sorted shards."""
    if partitions < 1:
        raise ValueError(f"partitions must be >= 1, got {partitions}")
    rng = np.random.default_rng(seed)
    shards = np.array_split(rng.permutation(pool), partitions)
    return [np.sort(shard) for shard in shards if shard.size]


def _shard_view(oracle: BaseKernel, indices: np.ndarray) -> ShardKernel:
    # a cached oracle caches per shard, never the whole pool
    return ShardKernel(oracle, indices, cache=bool(getattr(oracle, "cache_train", False)))


def _shard_stats(stage: str, index: int, view: ShardKernel, report: SelectionReport) -> Dict[str, Any]:
    return {
        "stage": stage,
        "index": index,
        "size": view.size,
        "kernel_evals": report.kernel_evals,
        "kernel_footprint": view.footprint,
        "cached": view.cache,
        "selections": list(report.selections),
        "objective": report.objective,
    }


def select_distributed(k: int, partitions: int, seed: int, oracle: BaseKernel, affinity: AffinityVector,
                       tol_d: Optional[float] = None, candidates=None, verify_inverse: bool = True,
                       tol_d_scale: float = TOL_D_SCALE, threads: int = 1) -> SelectionReport:
    """Two-round partition/merge greedy selection.

    Args:
        k (int): Number of prototypes
        partitions (int): Number of shards
        seed (int): Seed of the shuffle
        oracle (BaseKernel): Kernel over the training pool
        affinity (AffinityVector): Affinity of the pool to the test set
        tol_d (float): Absolute degeneracy threshold
        candidates (array-like): Restrict selection to these training indices
        verify_inverse (bool): Check K_SS * inv = I after every step
        tol_d_scale (float): Relative degeneracy threshold
        threads (int): Worker threads for the shard round

    Returns:
        SelectionReport: Report with method "distributed" and per-shard ``shard_stats``
    """
    pool = normalize_pool(oracle, affinity, candidates)
    params = dict(tol_d=tol_d, verify_inverse=verify_inverse, tol_d_scale=tol_d_scale)

    if partitions == 1:
        view = _shard_view(oracle, pool)
        report = select_sbq(k, view, affinity, candidates=pool, **params)
        report.method = "distributed"
        report.seed = seed
        report.config = dict(report.config, partitions=1, threads=threads)
        report.shard_stats = [_shard_stats("shard", 0, view, report)]
        return report

    shards = partition_pool(pool, partitions, seed)
    views = [_shard_view(oracle, shard) for shard in shards]
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        futures = [executor.submit(select_sbq, k, view, affinity, candidates=view.indices, **params)
                   for view in views]
        shard_reports = [f.result() for f in futures]

    stats = [_shard_stats("shard", i, view, report)
             for i, (view, report) in enumerate(zip(views, shard_reports))]

    union = np.unique(np.concatenate([np.asarray(r.selections, dtype=np.int64) for r in shard_reports]))
    merge_view = _shard_view(oracle, union)
    merged = select_sbq(k, merge_view, affinity, candidates=union, **params)
    stats.append(_shard_stats("merge", len(shards), merge_view, merged))

    # argmax keeps the first shard among equals
    best_shard = int(np.argmax([r.objective for r in shard_reports]))
    winner = merged
    if shard_reports[best_shard].objective > merged.objective:
        winner = shard_reports[best_shard]
        logger.debug("Shard %d beats the merged selection (%.6g > %.6g)",
                     best_shard, winner.objective, merged.objective)

    total_evals = sum(r.kernel_evals for r in shard_reports) + merged.kernel_evals
    config = dict(winner.config, k=k, partitions=partitions, threads=threads,
                  num_candidates=int(pool.size),
                  winner="merge" if winner is merged else f"shard-{best_shard}")
    return SelectionReport(
        selections=list(winner.selections),
        weights=list(winner.weights),
        objective_trace=list(winner.objective_trace),
        variance_trace=list(winner.variance_trace),
        kernel_evals=total_evals,
        config=config,
        truncated=winner.truncated,
        method="distributed",
        seed=seed,
        shard_stats=stats,
    )
