"""Exception types for solver failures.

Argument validation errors raise plain ValueError; the classes here signal
failures that occur after valid input was accepted.
"""

from __future__ import annotations


class NumericalError(RuntimeError):
    """A non-finite value appeared during evaluation.

    ``location`` identifies where, typically a node pair (i, j).
    """

    def __init__(self, message: str, location: tuple | None = None):
        super().__init__(message)
        self.location = location


class SolverFailure(RuntimeError):
    """A direct solve failed (singular or badly conditioned system)."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NoConvergence(RuntimeError):
    """An iteration hit its cap before reaching tolerance."""

    def __init__(self, message: str, iterations: int = 0,
                 last_ratio: float | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.last_ratio = last_ratio


class ContinuationFailure(RuntimeError):
    """The continuation step size underflowed before reaching the target.

    Carries the trace accumulated so far; a persistent failure usually means
    the instance lacks the monotonicity margin the method relies on.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class EstimationFailure(RuntimeError):
    """A sampling-based estimate had no admissible sample points."""
