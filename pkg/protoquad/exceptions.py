"""Error hierarchy for ProtoQuad."""

from typing import Any, Optional


class ProtoQuadError(Exception):
    """Base class for domain errors raised by ProtoQuad."""


class DataFormatError(ProtoQuadError, ValueError):
    """A dataset or embedding file could not be parsed."""


class TrainingError(ProtoQuadError):
    """The built-in logistic trainer could not produce a model."""


class SingularMetricError(ProtoQuadError):
    """The Fisher metric is not positive definite."""


class DegenerateCandidate(ProtoQuadError):
    """A candidate atom is numerically dependent on the current selection."""

    def __init__(self, schur: float, tol: float):
        super().__init__(f"Schur complement {schur:.3e} <= tolerance {tol:.3e}")
        self.schur = schur
        self.tol = tol


class PoolExhausted(ProtoQuadError):
    """No non-degenerate unselected candidate is left.

    The partial report collected so far is attached as ``report``.
    """

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class GuardExceededError(ProtoQuadError):
    """A brute-force enumeration would exceed the combinatorial guard."""


class PremiseError(ProtoQuadError):
    """An analysis routine was called on an instance violating its premise."""


class ExperimentError(ProtoQuadError):
    """A workflow cannot be run with the given configuration."""


class UsageError(ProtoQuadError):
    """A command was invoked without a required combination of options."""
