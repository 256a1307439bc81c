import logging
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from protoquad.evaluation.metrics import EvaluationMetrics
from protoquad.exceptions import ExperimentError
from protoquad.kernels.fisher import AffinityVector, KernelOracle
from protoquad.workflows.base import (
    ExperimentConfig,
    ExperimentReport,
    build_oracle,
    fit_model,
    fit_or_flag,
    load_splits,
    make_selector,
    run_seeds,
    selection_order,
)

logger = logging.getLogger(__name__)

# scale of the sum-to-one row appended to the nonnegative least-squares system
SUM_ROW_SCALE = 1e3


def clipped_quadrature_weights(oracle: KernelOracle, affinity: AffinityVector,
                               subset: np.ndarray) -> Optional[np.ndarray]:
    """Least-squares quadrature weights of a subset, clipped at zero; None when all vanish."""
    gram = oracle.train_block(subset, subset)
    weights = linalg.lstsq(gram, affinity.z[subset])[0]
    weights = np.clip(weights, 0.0, None)
    if weights.sum() <= 0:
        return None
    return weights / weights.sum()


def matched_weights(oracle: KernelOracle, subset: np.ndarray) -> Optional[np.ndarray]:
    """Nonnegative weights whose weighted subset matches the training set's mean Fisher embedding.

    Solves min ||sum_i w_i (h_i - h_mean)||^2 over w >= 0 with sum(w) = 1, h being the
    whitened training gradients; the sum constraint is a heavily weighted extra row of the
    nonnegative least-squares system. The residual is the log-likelihood gradient of the
    weighted subset at the fitted parameters minus that of the whole training set, measured
    in the inverse Fisher metric. When it vanishes the fitted parameters are the unique
    optimum of the weighted refit.

    Args:
        oracle (KernelOracle): Kernel over the training set
        subset (np.ndarray): Training indices to weight

    Returns:
        Optional[np.ndarray]: Weights summing to 1, or None when every weight is zero
    """
    subset = np.asarray(subset, dtype=np.int64)
    grads = oracle.train_grads.rows
    centred = oracle.metric.whiten(grads[subset] - grads.mean(axis=0))
    system = np.vstack([centred.T, np.full((1, subset.size), SUM_ROW_SCALE)])
    target = np.zeros(system.shape[0])
    target[-1] = SUM_ROW_SCALE
    weights, residual = optimize.nnls(system, target)
    total = weights.sum()
    if total <= 0:
        return None
    logger.debug("Matched weights on %d points: %d nonzero, residual %.3e",
                 subset.size, int(np.count_nonzero(weights)), residual)
    return weights / total


def subset_weights(config: ExperimentConfig, oracle: KernelOracle, affinity: AffinityVector,
                   subset: np.ndarray) -> Optional[np.ndarray]:
    """Retraining weights of a selected subset under ``config.weighting``; None when all are zero."""
    if config.weighting == "matched":
        return matched_weights(oracle, subset)
    if config.weighting == "clipped":
        return clipped_quadrature_weights(oracle, affinity, subset)
    raise ExperimentError(f"Subset weights requested with weighting={config.weighting}")


def _skip_reason(size: int, n_train: int, labels: Optional[np.ndarray]) -> Optional[str]:
    if size < 2:
        return f"subset size {size} is below 2"
    if size > n_train:
        return f"subset size {size} exceeds the {n_train} training points"
    if labels is not None and np.unique(labels).size < 2:
        return f"subset of size {size} holds a single class"
    return None


def summarize_one_seed(config: ExperimentConfig, seed: int) -> ExperimentReport:
    """Retrain on the first k selected points for every configured k, next to a random subset.

    Selected subsets are refit with ``config.weighting`` sample weights; random subsets are
    always refit unweighted.
    """
    report = ExperimentReport(config.task, config.to_dict())
    train, val, test = load_splits(config, seed)
    params = fit_model(config, train)
    if not params.converged:
        report.flags.append(f"seed {seed}: full model did not converge")
    report.add_reference("full", "test_log_likelihood", seed,
                         EvaluationMetrics.mean_log_likelihood(params, test))
    report.add_reference("full", "test_accuracy", seed, EvaluationMetrics.accuracy(params, test))

    oracle, affinity = build_oracle(params, train, val, config.mode, config.ridge_coeff)
    # k = t keeps every point, so only smaller sizes need a selection order
    needed = max([k for k in config.subset_sizes if 2 <= k < train.n], default=0)
    order = selection_order(make_selector(config, seed), oracle, affinity, np.arange(train.n), needed,
                            extension=config.extension, direction=config.direction)
    rng = np.random.default_rng([seed, 2])

    for k in config.subset_sizes:
        reason = _skip_reason(k, train.n, None)
        if reason is not None:
            logger.warning("seed %d: skipping %s", seed, reason)
            report.flags.append(f"seed {seed}: skipped {reason}")
            continue
        subsets = {
            config.method: (np.arange(train.n) if k == train.n
                            else np.sort(np.asarray(order[:k], dtype=np.int64))),
            "random": np.sort(rng.choice(train.n, size=k, replace=False)),
        }
        for method, subset in subsets.items():
            reason = _skip_reason(k, train.n, train.labels[subset])
            if reason is not None:
                logger.warning("seed %d: skipping %s for %s", seed, reason, method)
                report.flags.append(f"seed {seed} {method}: skipped {reason}")
                continue
            sample_weight = None
            # k = t refits on the whole training set unweighted
            if method == config.method and config.weighting != "none" and k < train.n:
                sample_weight = subset_weights(config, oracle, affinity, subset)
                if sample_weight is None:
                    report.flags.append(
                        f"seed {seed} {method} k={k}: every {config.weighting} weight is zero")
                    continue
            refit = fit_or_flag(config, train.subset(subset), report, f"seed {seed} {method} k={k}",
                                sample_weight=sample_weight)
            if refit is None:
                continue
            report.add(method, k, "test_log_likelihood", seed,
                       EvaluationMetrics.mean_log_likelihood(refit, test))
            report.add(method, k, "test_accuracy", seed, EvaluationMetrics.accuracy(refit, test))
    return report


def run_summarize(config: ExperimentConfig) -> ExperimentReport:
    """Summarize the training set by k prototypes and compare retrained log-likelihoods.

    Args:
        config (ExperimentConfig): Workflow parameters with ``task="summarize"``
            and ``weighting`` one of "none", "clipped" or "matched"

    Returns:
        ExperimentReport: ``test_log_likelihood`` and ``test_accuracy`` per method and subset size
    """
    return run_seeds(config, summarize_one_seed)
