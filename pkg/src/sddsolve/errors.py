"""Exception types raised by the solvers."""
from __future__ import annotations


class NonConvergenceError(RuntimeError):
    """An iteration ran past its budget without meeting its target.

    ``details`` carries whatever diagnostics the raiser collected
    (measured contraction, iteration counts, per-level chain, trace).
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class RecursionDepthError(NonConvergenceError):
    """The recursive solver nested deeper than its cap."""


class SamplingLoopError(NonConvergenceError):
    """Preconditioner resampling hit its iteration cap."""
