"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (config=2, data=3,
numeric=4, io=5), so raise the most specific class that applies.
"""


class ScipError(Exception):
    """Base class for all package errors."""


class ParameterError(ScipError, ValueError):
    """An argument or generation parameter is outside its valid range."""


class ConfigError(ScipError):
    """A config file or database is malformed (detected at load time)."""


class InsufficientDataError(ScipError):
    """Not enough observations to run the requested operation."""


class OrderingError(ScipError):
    """Timestamps are not in the required order."""


class UndefinedMetricError(ScipError):
    """A metric denominator is zero; the value does not exist."""


class NumericError(ScipError):
    """NaN/Inf appeared where a finite value is required."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"loss is not finite at epoch {epoch}")


class DescriptorDegenerateError(ScipError):
    """No usable traffic-descriptor candidate exists for the trace."""


class ProtocolError(ScipError):
    """Malformed message on the admission-control wire protocol."""
