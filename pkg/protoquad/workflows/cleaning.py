import logging
from typing import Dict, List

import numpy as np

from protoquad.evaluation.metrics import EvaluationMetrics
from protoquad.exceptions import ExperimentError
from protoquad.workflows.base import (
    ExperimentConfig,
    ExperimentReport,
    baseline_order,
    build_oracle,
    fit_model,
    fit_or_flag,
    load_splits,
    make_selector,
    plant_label_noise,
    run_seeds,
    selection_order,
)

logger = logging.getLogger(__name__)


def misclassified(params, data) -> np.ndarray:
    """Positions of the examples the model gets wrong."""
    return np.flatnonzero(params.predict(data.features) != data.labels)


def _removal_orders(config: ExperimentConfig, seed: int, oracle, affinity, n_train: int,
                    needed: int) -> Dict[str, List[int]]:
    candidates = np.arange(n_train)
    orders = {
        config.method: selection_order(make_selector(config, seed), oracle, affinity, candidates, needed,
                                       extension=config.extension, direction=config.direction),
    }
    for name in config.baselines:
        orders[name] = baseline_order(name, oracle, candidates, seed)[:needed]
    return orders


def clean_one_seed(config: ExperimentConfig, seed: int) -> ExperimentReport:
    """Plant noise, pick training points against the misclassified validation set, remove and retrain."""
    report = ExperimentReport(config.task, config.to_dict())
    train, val, test = load_splits(config, seed)
    if max(config.removal_counts) > train.n:
        raise ExperimentError(
            f"Removal budget {max(config.removal_counts)} exceeds the {train.n} training points"
        )
    noisy, flipped = plant_label_noise(train, config.noise_fraction, config.noise_mode, seed)
    params = fit_model(config, noisy)
    if not params.converged:
        report.flags.append(f"seed {seed}: base model did not converge")
    baseline_accuracy = EvaluationMetrics.accuracy(params, test)
    report.add_reference("baseline", "test_accuracy", seed, baseline_accuracy)

    wrong = misclassified(params, val)
    if wrong.size == 0:
        raise ExperimentError(f"seed {seed}: no misclassified validation points to clean against")
    logger.info("seed %d: %d flipped training labels, %d misclassified validation points",
                seed, flipped.size, wrong.size)

    oracle, affinity = build_oracle(params, noisy, val.subset(wrong), config.mode, config.ridge_coeff)
    orders = _removal_orders(config, seed, oracle, affinity, noisy.n, max(config.removal_counts))

    if config.curated_indices is not None:
        curated = np.unique(np.asarray(config.curated_indices, dtype=np.int64))
        if curated.size and (curated.min() < 0 or curated.max() >= noisy.n):
            raise ExperimentError(f"Curated indices must lie in [0, {noisy.n})")
        orders["curated"] = [int(i) for i in curated]

    flipped_set = set(flipped.tolist())
    for method, order in orders.items():
        budgets = [len(order)] if method == "curated" else config.removal_counts
        for budget in budgets:
            removed = order[:budget]
            report.add(method, budget, "flipped_removed", seed, len(flipped_set.intersection(removed)))
            if budget == 0:
                report.add(method, budget, "test_accuracy", seed, baseline_accuracy)
                continue
            refit = fit_or_flag(config, noisy.drop(removed), report, f"seed {seed} {method} remove {budget}")
            if refit is not None:
                report.add(method, budget, "test_accuracy", seed, EvaluationMetrics.accuracy(refit, test))
    return report


def run_cleaning(config: ExperimentConfig) -> ExperimentReport:
    """Remove harmful training points and report retrained test accuracy per removal budget.

    Args:
        config (ExperimentConfig): Workflow parameters with ``task="clean"``

    Returns:
        ExperimentReport: ``test_accuracy`` and ``flipped_removed`` per method and budget
    """
    return run_seeds(config, clean_one_seed)
