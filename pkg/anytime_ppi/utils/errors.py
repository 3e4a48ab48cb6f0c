"""
Error types raised by the inference engine and mapped to CLI exit codes.
"""
from typing import Optional


class AnytimePPIError(Exception):
    exit_code = 1


class ConfigError(AnytimePPIError, ValueError):
    """Invalid configuration or out-of-range parameter."""

    exit_code = 2


class InvalidRatioError(ConfigError):
    """Fewer unlabelled than labelled observations where N >= n is required."""


class DataError(AnytimePPIError, ValueError):
    """A malformed or non-finite record."""

    exit_code = 3

    def __init__(
        self, message: str, index: Optional[int] = None, line: Optional[int] = None
    ):
        self.index = index
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if index is not None:
            where.append(f"record {index}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InsufficientDataError(AnytimePPIError, ValueError):
    """An estimator is not defined yet for the current sample sizes."""

    exit_code = 3


class DegeneratePredictorError(InsufficientDataError):
    """Constant predictions: the power-tuning ratio is undefined."""


class DegenerateScaleError(InsufficientDataError):
    """Zero scale estimate given to the prior-assisted radius."""


class NumericalError(AnytimePPIError, ArithmeticError):
    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} [{details}]"
        super().__init__(message)
