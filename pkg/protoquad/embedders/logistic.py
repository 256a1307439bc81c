import logging
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg
from scipy.special import expit

from protoquad.embedders.base import BaseEmbedder, GradientMatrix
from protoquad.exceptions import DataFormatError, TrainingError
from protoquad.parsers.base import Dataset

logger = logging.getLogger(__name__)


class ParamVector:
    """Fitted logistic-regression parameters (intercept last when enabled)."""

    def __init__(self, values, fit_intercept: bool = True, converged: bool = True,
                 n_iter: int = 0, grad_norm: float = 0.0, l2: float = 0.0):
        """Initialize the parameter vector.

        Args:
            values (array-like): Length-p parameter vector
            fit_intercept (bool): Whether the last coordinate is an intercept
            converged (bool): False when the trainer stopped at max_iter
            n_iter (int): Newton iterations used
            grad_norm (float): Final infinity norm of the objective gradient
            l2 (float): Penalty the parameters were fitted with
        """
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise TrainingError("Parameter vector has non-finite entries")
        self.values = values
        self.fit_intercept = fit_intercept
        self.converged = converged
        self.n_iter = n_iter
        self.grad_norm = grad_norm
        self.l2 = l2

    @property
    def param_dim(self) -> int:
        return self.values.shape[0]

    def design(self, features: np.ndarray) -> np.ndarray:
        """Append the intercept column when enabled and check dimensions."""
        features = np.asarray(features, dtype=np.float64)
        if self.fit_intercept:
            features = np.hstack([features, np.ones((features.shape[0], 1))])
        if features.shape[1] != self.param_dim:
            raise DataFormatError(
                f"Parameter dimension {self.param_dim} does not match "
                f"{features.shape[1] - int(self.fit_intercept)} features"
                + (" plus intercept" if self.fit_intercept else "")
            )
        return features

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return self.design(features) @ self.values

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Probability of label 1 for each row."""
        return expit(self.decision_function(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.decision_function(features) > 0).astype(np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "values": self.values.tolist(),
            "fit_intercept": self.fit_intercept,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_norm": self.grad_norm,
            "l2": self.l2,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ParamVector":
        try:
            return cls(
                payload["values"],
                fit_intercept=bool(payload.get("fit_intercept", True)),
                converged=bool(payload.get("converged", True)),
                n_iter=int(payload.get("n_iter", 0)),
                grad_norm=float(payload.get("grad_norm", 0.0)),
                l2=float(payload.get("l2", 0.0)),
            )
        except KeyError:
            raise DataFormatError("Parameter file has no 'values' entry")

    def __repr__(self) -> str:
        return (f"ParamVector(p={self.param_dim}, fit_intercept={self.fit_intercept}, "
                f"converged={self.converged})")


def _objective(X, y, w, theta, l2, mask):
    scores = X @ theta
    # log(1 + e^s) - y*s, stable for large |s|
    losses = np.logaddexp(0.0, scores) - y * scores
    value = np.dot(w, losses) + 0.5 * l2 * np.sum((mask * theta) ** 2)
    return value, scores


def train_logistic(data: Dataset, l2: float = 1e-2, tol: float = 1e-8, max_iter: int = 100,
                   fit_intercept: bool = True, sample_weight=None) -> ParamVector:
    """Fit L2-regularized logistic regression by damped Newton steps.

    Minimizes the weighted mean negative log-likelihood plus (l2/2)*||theta||^2,
    with the intercept left unpenalized.

    Args:
        data (Dataset): Labelled training set
        l2 (float): Penalty strength, >= 0
        tol (float): Stop once the gradient's infinity norm is <= tol
        max_iter (int): Newton iteration cap
        fit_intercept (bool): Append a constant-1 coordinate
        sample_weight (array-like): Optional nonnegative per-example weights

    Returns:
        ParamVector: Fitted parameters; ``converged`` is False when max_iter was hit
    """
    if not data.has_labels:
        raise TrainingError("Training requires labels")
    if l2 < 0:
        raise ValueError(f"l2 must be >= 0, got {l2}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")

    y = data.labels.astype(np.float64)
    if sample_weight is None:
        w = np.full(data.n, 1.0 / data.n)
    else:
        w = np.asarray(sample_weight, dtype=np.float64).reshape(-1)
        if w.shape[0] != data.n or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("sample_weight must be finite, nonnegative and one per example")
        if w.sum() <= 0:
            raise TrainingError("All sample weights are zero")
        w = w / w.sum()

    active = w > 0
    if np.unique(y[active]).size < 2:
        raise TrainingError("Labels contain a single class; the fit is degenerate")

    X = data.features
    if fit_intercept:
        X = np.hstack([X, np.ones((data.n, 1))])
    p = X.shape[1]
    mask = np.ones(p)
    if fit_intercept:
        mask[-1] = 0.0

    theta = np.zeros(p)
    value, scores = _objective(X, y, w, theta, l2, mask)
    grad_norm = np.inf
    for it in range(max_iter + 1):
        sigma = expit(scores)
        grad = X.T @ (w * (sigma - y)) + l2 * mask * theta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            return ParamVector(theta, fit_intercept, True, it, grad_norm, l2)
        if it == max_iter:
            break

        hess = (X * (w * sigma * (1.0 - sigma))[:, None]).T @ X + np.diag(l2 * mask)
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(hess, grad)[0]

        decrease = float(np.dot(grad, step))
        t = 1.0
        while True:
            candidate = theta - t * step
            new_value, new_scores = _objective(X, y, w, candidate, l2, mask)
            if not np.isfinite(new_value):
                raise TrainingError(f"Non-finite loss at iteration {it} (step {t:.3e})")
            if new_value <= value - 1e-4 * t * decrease or t < 1e-12:
                break
            t *= 0.5
        theta, value, scores = candidate, new_value, new_scores

    logger.warning("Logistic training stopped at max_iter=%d with gradient norm %.3e",
                   max_iter, grad_norm)
    return ParamVector(theta, fit_intercept, False, max_iter, grad_norm, l2)


def per_example_gradients(params: ParamVector, data: Dataset, labels=None) -> GradientMatrix:
    """Gradients of each example's Bernoulli log-likelihood: (y - sigma(theta^T x)) * x.

    Args:
        params (ParamVector): Fitted parameters
        data (Dataset): Examples to embed
        labels (array-like): Labels to use instead of ``data.labels``

    Returns:
        GradientMatrix: n x p gradient rows
    """
    y = data.labels if labels is None else np.asarray(labels)
    if y is None:
        raise DataFormatError("Per-example gradients need labels")
    X = params.design(data.features)
    residual = y.astype(np.float64) - expit(X @ params.values)
    return GradientMatrix(residual[:, None] * X)


def example_log_likelihood(params: ParamVector, data: Dataset) -> np.ndarray:
    """Per-example log p(y | x, theta)."""
    scores = params.decision_function(data.features)
    return data.labels * scores - np.logaddexp(0.0, scores)


class LogisticEmbedder(BaseEmbedder):
    """Built-in logistic-regression model whose gradients form the Fisher embedding."""

    def __init__(self, l2: float = 1e-2, tol: float = 1e-8, max_iter: int = 100,
                 fit_intercept: bool = True, params: Optional[ParamVector] = None):
        """Initialize the embedder.

        Args:
            l2 (float): Penalty strength
            tol (float): Gradient tolerance for training
            max_iter (int): Newton iteration cap
            fit_intercept (bool): Append an intercept coordinate
            params (ParamVector): Already fitted parameters, skips training
        """
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.fit_intercept = fit_intercept
        self.params = params

    def fit(self, dataset: Dataset) -> "LogisticEmbedder":
        self.params = train_logistic(dataset, self.l2, self.tol, self.max_iter, self.fit_intercept)
        return self

    def embed(self, dataset: Dataset) -> GradientMatrix:
        """Embed examples; unlabelled examples use the model's predicted labels."""
        if self.params is None:
            raise TrainingError("LogisticEmbedder.embed called before fit")
        labels = dataset.labels
        if labels is None:
            logger.debug("Embedding %d unlabelled examples with predicted labels", dataset.n)
            labels = self.params.predict(dataset.features)
        return per_example_gradients(self.params, dataset, labels)
