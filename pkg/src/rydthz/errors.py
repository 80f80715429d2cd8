"""Exception hierarchy shared across the package."""


class RydthzError(Exception):
    """Base class for all package errors."""


class SpaceMismatchError(RydthzError):
    """States / operators defined on incompatible Hilbert spaces."""


class DimensionError(RydthzError):
    """Shape or dimension inconsistency, including dense-cap overflow."""


class ValidationError(RydthzError):
    """Invalid parameter record or state content."""


class IntegrationError(RydthzError):
    """Time evolution failed (step-size underflow, trace drift, ...)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class TrajectoryError(RydthzError):
    """A quantum trajectory aborted; carries the diagnostic record."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic


class TruncationQualityError(RydthzError):
    """TEBD truncation quality gate tripped. The computed result is attached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class AnalysisError(RydthzError):
    """Trace analysis impossible (e.g. no finite-size turnover in window)."""


class ConfigError(RydthzError):
    """Run configuration rejected (unknown key, bad value, bad preset)."""
