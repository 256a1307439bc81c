from .base import ExperimentConfig, ExperimentReport, make_logistic_data, plant_label_noise, selection_order
from .cleaning import run_cleaning
from .mislabel import run_mislabel
from .neighbours import run_neighbours
from .summarize import run_summarize

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "make_logistic_data",
    "plant_label_noise",
    "selection_order",
    "run_cleaning",
    "run_mislabel",
    "run_neighbours",
    "run_summarize",
    "run_experiment",
]


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the workflow named by ``config.task``."""
    runners = {
        "clean": run_cleaning,
        "mislabel": run_mislabel,
        "summarize": run_summarize,
        "neighbours": run_neighbours,
    }
    return runners[config.task](config)
