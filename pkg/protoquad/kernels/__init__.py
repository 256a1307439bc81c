from .base import BaseKernel
from .fisher import AffinityVector, KernelOracle, affinity_vector, mmd_squared, rkhs_distance
from .precomputed import PrecomputedKernel

__all__ = [
    "BaseKernel",
    "KernelOracle",
    "PrecomputedKernel",
    "AffinityVector",
    "affinity_vector",
    "mmd_squared",
    "rkhs_distance",
]
