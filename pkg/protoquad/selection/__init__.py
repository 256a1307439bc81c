from .base import InverseState, SelectionReport, VariantConfig, extend_inverse
from .distributed import select_distributed
from .influence import InfluenceReport, influence_report, influence_scores
from .matching_pursuit import select_mp
from .sbq import greedy_step, select_sbq
from .stochastic import select_stochastic
from .universal import UniversalSelector

__all__ = [
    "InverseState",
    "SelectionReport",
    "VariantConfig",
    "extend_inverse",
    "greedy_step",
    "select_sbq",
    "select_mp",
    "select_stochastic",
    "select_distributed",
    "InfluenceReport",
    "influence_report",
    "influence_scores",
    "UniversalSelector",
]
