"""Exception hierarchy shared by all modules."""


class SalemError(Exception):
    """Base class for every error raised by the package."""


class InputError(SalemError):
    """Malformed scenario, unreadable file, or bad parameter."""


class DomainError(SalemError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class EmptyWindowError(SalemError):
    """Q(M) is empty where a nonempty window is required."""

    def __init__(self, M, message=None):
        self.M = M
        super().__init__(message or f"empty window Q(M) at M={M:g}")


class InsufficientDataError(SalemError):
    """Too few samples for an estimator to produce a value."""


class BoxTooLargeError(SalemError):
    """Requested frequency box exceeds the configured memory cap."""


class MsetExhaustedError(SalemError):
    """No element of the truncated scale set passes the selection test."""

    def __init__(self, message, best_M=None, best_ratio=None, level=None):
        self.best_M = best_M
        self.best_ratio = best_ratio
        self.level = level
        super().__init__(message)
