"""Exception types raised by the numerical core."""

from __future__ import annotations

__all__ = [
    "NgdimError",
    "DegenerateScatterError",
    "WhiteningError",
    "ConvergenceError",
    "BootstrapFailureError",
    "SimulationFailureError",
]


class NgdimError(Exception):
    """Base class for all package-specific errors."""


class DegenerateScatterError(NgdimError):
    """A scatter matrix lost (semi)definiteness where an inverse root is required."""


class WhiteningError(NgdimError):
    """Whitening is impossible because the scatter is singular or near-singular.

    Carries the observed condition number when available.
    """

    def __init__(self, message: str, condition_number: float | None = None):
        super().__init__(message)
        self.condition_number = condition_number


class ConvergenceError(NgdimError):
    """A fixed-point solver failed to reach tolerance within the iteration cap.

    The last iterate is attached so callers can inspect how far the
    solver got.
    """

    def __init__(self, message: str, location=None, scatter=None, residual: float | None = None):
        super().__init__(message)
        self.location = location
        self.scatter = scatter
        self.residual = residual


class BootstrapFailureError(NgdimError):
    """Too many bootstrap replicates failed to refit."""

    def __init__(self, message: str, failures: int):
        super().__init__(message)
        self.failures = failures


class InputDataError(NgdimError):
    """Input data cannot be ingested (malformed CSV, too few rows, ...)."""


class SimulationFailureError(NgdimError):
    """Too many simulation repetitions failed."""

    def __init__(self, message: str, failures: int, total: int):
        super().__init__(message)
        self.failures = failures
        self.total = total
