import logging

import numpy as np

from protoquad.evaluation.metrics import EvaluationMetrics
from protoquad.exceptions import ExperimentError
from protoquad.parsers.base import Dataset
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


def inspection_budgets(fractions, pool_size: int):
    return [int(round(f * pool_size)) for f in fractions]


def _trusted_targets(val: Dataset, train: Dataset, curated: np.ndarray) -> Dataset:
    features = np.vstack([val.features, train.features[curated]])
    labels = np.concatenate([val.labels, train.labels[curated]])
    return Dataset(features, labels)


def mislabel_one_seed(config: ExperimentConfig, seed: int) -> ExperimentReport:
    """Flip labels outside a curated subset, then inspect candidates in each method's order."""
    report = ExperimentReport(config.task, config.to_dict())
    train, val, test = load_splits(config, seed)

    curated_size = int(round(config.curated_fraction * train.n))
    curated = np.sort(np.random.default_rng([seed, 3]).choice(train.n, size=curated_size, replace=False))
    candidates = np.setdiff1d(np.arange(train.n), curated)
    if candidates.size == 0:
        raise ExperimentError("The curated subset leaves no candidates to inspect")

    fraction = config.flip_fraction * candidates.size / train.n
    noisy, flipped = plant_label_noise(train, fraction, config.noise_mode, seed, protected=curated)
    if flipped.size == 0:
        raise ExperimentError(f"seed {seed}: no labels were flipped, fraction fixed is undefined")

    clean_params = fit_model(config, train)
    report.add_reference("clean", "test_accuracy", seed, EvaluationMetrics.accuracy(clean_params, test))
    params = fit_model(config, noisy)
    if not params.converged:
        report.flags.append(f"seed {seed}: noisy model did not converge")
    noisy_accuracy = EvaluationMetrics.accuracy(params, test)
    report.add_reference("noisy", "test_accuracy", seed, noisy_accuracy)

    # curated points are clean by construction, so they join the validation targets
    oracle, affinity = build_oracle(params, noisy, _trusted_targets(val, noisy, curated), config.mode,
                                    config.ridge_coeff)
    needed = candidates.size
    orders = {
        config.method: selection_order(make_selector(config, seed), oracle, affinity, candidates, needed,
                                       extension=config.extension, direction=config.direction),
    }
    for name in config.baselines:
        orders[name] = baseline_order(name, oracle, candidates, seed)

    budgets = inspection_budgets(config.inspect_fractions, candidates.size)
    flipped_set = set(flipped.tolist())
    for method, order in orders.items():
        fixed = EvaluationMetrics.fraction_fixed(order, flipped, budgets)
        for budget, value in zip(budgets, fixed):
            report.add(method, budget, "fraction_fixed", seed, value)
            if budget == 0:
                report.add(method, budget, "test_accuracy", seed, noisy_accuracy)
                continue
            repaired = [i for i in order[:budget] if i in flipped_set]
            labels = noisy.labels.copy()
            labels[repaired] = train.labels[repaired]
            refit = fit_or_flag(config, noisy.with_labels(labels), report,
                                f"seed {seed} {method} inspect {budget}")
            if refit is not None:
                report.add(method, budget, "test_accuracy", seed, EvaluationMetrics.accuracy(refit, test))
    logger.info("seed %d: %d of %d candidates flipped", seed, flipped.size, candidates.size)
    return report


def run_mislabel(config: ExperimentConfig) -> ExperimentReport:
    """Fix flipped labels by inspecting candidates in selection order.

    Args:
        config (ExperimentConfig): Workflow parameters with ``task="mislabel"``

    Returns:
        ExperimentReport: ``fraction_fixed`` and ``test_accuracy`` per method and inspection budget
    """
    if config.flip_fraction == 0:
        raise ExperimentError("flip_fraction must be positive: fraction fixed is undefined without flips")
    return run_seeds(config, mislabel_one_seed)
