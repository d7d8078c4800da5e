"""Exception types for otdr-guard."""

from typing import Optional


class OtdrGuardError(Exception):
    """Base class for errors raised by otdr-guard."""


class ConfigError(OtdrGuardError, ValueError):
    """Invalid or unknown configuration."""


class DataContractError(OtdrGuardError, ValueError):
    """A dataset, sample or input violates the contract of the operation consuming it."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelFileError(OtdrGuardError, ValueError):
    """A model file cannot be used (version, corruption, shapes, calibration)."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with the operation."""


class NonFiniteError(ValueError):
    """A tensor contains NaN or infinite values."""
