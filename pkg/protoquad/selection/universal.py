from typing import Optional

from protoquad.kernels.base import BaseKernel
from protoquad.kernels.fisher import AffinityVector
from protoquad.selection.base import TOL_D_SCALE, SelectionReport, VariantConfig


class UniversalSelector:
    """Universal selector that dispatches to the greedy variants."""

    def __init__(self, method: str = "sbq", k: int = 10, delta: float = 0.1, partitions: int = 2,
                 seed: int = 0, threads: int = 1, tol_d: Optional[float] = None,
                 tol_d_scale: float = TOL_D_SCALE, verify_inverse: bool = True):
        """Initialize the universal selector.

        Args:
            method (str): Selector ("sbq", "mp", "stochastic", "distributed")
            k (int): Number of prototypes
            delta (float): Failure probability for stochastic selection
            partitions (int): Shards for distributed selection
            seed (int): Seed for stochastic sampling and shard shuffling
            threads (int): Worker threads for distributed selection
            tol_d (float): Absolute degeneracy threshold
            tol_d_scale (float): Relative degeneracy threshold
            verify_inverse (bool): Check the maintained inverse after every step
        """
        self.config = VariantConfig(method=method.lower(), k=k, delta=delta, partitions=partitions, seed=seed)
        self.threads = threads
        self.tol_d = tol_d
        self.tol_d_scale = tol_d_scale
        self.verify_inverse = verify_inverse

    @classmethod
    def from_config(cls, config: VariantConfig, **kwargs) -> "UniversalSelector":
        return cls(config.method, config.k, config.delta, config.partitions, config.seed, **kwargs)

    @property
    def method(self) -> str:
        return self.config.method

    def select(self, oracle: BaseKernel, affinity: AffinityVector, candidates=None,
               k: Optional[int] = None) -> SelectionReport:
        """Select prototypes.

        Args:
            oracle (BaseKernel): Kernel over the training pool
            affinity (AffinityVector): Affinity of the pool to the test set
            candidates (array-like): Restrict selection to these training indices
            k (int): Override the configured number of prototypes

        Returns:
            SelectionReport: Selector output
        """
        k = self.config.k if k is None else k
        common = dict(tol_d=self.tol_d, candidates=candidates, verify_inverse=self.verify_inverse,
                      tol_d_scale=self.tol_d_scale)
        if self.method == "sbq":
            from .sbq import select_sbq
            return select_sbq(k, oracle, affinity, **common)
        elif self.method == "mp":
            from .matching_pursuit import select_mp
            return select_mp(k, oracle, affinity, **common)
        elif self.method == "stochastic":
            from .stochastic import select_stochastic
            return select_stochastic(k, self.config.delta, self.config.seed, oracle, affinity, **common)
        elif self.method == "distributed":
            from .distributed import select_distributed
            return select_distributed(k, self.config.partitions, self.config.seed, oracle, affinity,
                                      threads=self.threads, **common)
        raise ValueError(f"Unsupported method: {self.method}")
