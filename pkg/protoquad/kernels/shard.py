import threading

import numpy as np

from protoquad.kernels.base import BaseKernel


class ShardKernel(BaseKernel):
    """View of a parent kernel restricted to one shard of the candidate pool.

    Indices stay global, but only shard members may be requested. Entries are computed
    from the parent without touching any matrix the parent has materialized. With
    ``cache`` the shard's own block is built on first use. ``footprint`` is the largest
    number of kernel entries the view has held at once. Evaluations are also charged to
    the parent's counter.
    """

    def __init__(self, parent: BaseKernel, indices, cache: bool = False):
        """Initialize the view.

        Args:
            parent (BaseKernel): Kernel over the whole pool
            indices (array-like): Global indices of the shard
            cache (bool): Materialize the shard x shard block on first use
        """
        super().__init__()
        self.parent = parent
        self.indices = np.unique(np.asarray(indices, dtype=np.int64))
        self._check(self.indices, parent.num_train)
        self.cache = cache
        self.footprint = 0
        self._block = None
        self._lock = threading.Lock()

    @property
    def num_train(self) -> int:
        return self.parent.num_train

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def _count(self, entries: int) -> None:
        super()._count(entries)
        self.parent._count(entries)

    def _local(self, indices: np.ndarray) -> np.ndarray:
        positions = np.searchsorted(self.indices, indices)
        inside = positions < self.indices.size
        inside[inside] = self.indices[positions[inside]] == indices[inside]
        if not np.all(inside):
            outside = indices[~inside]
            raise IndexError(f"Indices {outside[:5].tolist()} are outside the shard")
        return positions

    def _hold(self, entries: int) -> None:
        with self._lock:
            self.footprint = max(self.footprint, int(entries))

    def _train_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        local_rows, local_cols = self._local(rows), self._local(cols)
        if self.cache:
            with self._lock:
                if self._block is None:
                    self._block = self.parent._raw_entries(self.indices, self.indices)
                    self.footprint = max(self.footprint, int(self._block.size))
                block = self._block
            return block[np.ix_(local_rows, local_cols)]
        values = self.parent._raw_entries(rows, cols)
        self._hold(values.size)
        return values

    def _train_diagonal(self, indices: np.ndarray) -> np.ndarray:
        self._local(indices)
        return self.parent._train_diagonal(indices)

    def __repr__(self) -> str:
        return f"ShardKernel(size={self.size}, cache={self.cache}, footprint={self.footprint})"
