"""Exception types shared across the package."""


class MrvoxError(Exception):
    """Base class for all package errors."""


class DatasetError(MrvoxError):
    """Invalid or inconsistent dataset files / values."""


class StateError(MrvoxError):
    """Corrupt, version-mismatched, or out-of-order pipeline state."""


class RankDeficientDesignError(MrvoxError):
    """Design matrix does not have full column rank."""


class NotPositiveDefiniteError(MrvoxError):
    """Matrix could not be factorized even after jitter retries."""


class NonStationaryError(MrvoxError):
    """AR coefficients outside the stationarity region."""


class FitError(MrvoxError):
    """Optimizer or model fit failure."""


class ConvergenceError(MrvoxError):
    """Iterative solver exceeded its sweep budget."""
