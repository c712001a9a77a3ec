"""Exception hierarchy shared across the package.

The command line maps these onto exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class TrafficPinnError(Exception):
    """Base class for all package errors."""


class ConfigError(TrafficPinnError, ValueError):
    """Invalid configuration: bad key, out-of-range value, unstable step."""


class DomainError(TrafficPinnError, ValueError):
    """Argument outside the domain of an operation (bounds, shapes, ranges)."""


class DataError(TrafficPinnError, ValueError):
    """Malformed or inconsistent measurement data."""


class TrainingError(TrafficPinnError, RuntimeError):
    """Numerical failure during optimisation or model fitting."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EstimateUnavailableError(TrafficPinnError, LookupError):
    """No trained snapshot covers the queried time."""
