"""Exception types raised across the package."""


class SpreadLabError(Exception):
    """Base class for all package errors."""


class DomainError(SpreadLabError, ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class DimensionError(DomainError):
    """Incompatible dimensions, e.g. a simplex that does not fit in R^d."""


class LabelError(SpreadLabError, ValueError):
    """Labels are missing or inconsistent (no positives, no negatives, bad maps)."""


class BalanceError(LabelError):
    """The configuration is not class-balanced."""


class InsufficientDataError(SpreadLabError, ValueError):
    """A subclass or class has too few points for the requested statistic."""


class WindowError(DomainError):
    """An alpha window quantity is undefined for the given parameters."""


class NumericalFailure(SpreadLabError, RuntimeError):
    """A loss or gradient became non-finite."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingFailure(NumericalFailure):
    """Training diverged; ``diagnostics['epoch']`` holds the epoch index."""
