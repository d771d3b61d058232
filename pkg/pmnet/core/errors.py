from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

__all__ = [
    "PmNetError",
    "ConfigError",
    "DatasetFormatError",
    "InputError",
    "NumericError",
    "InternalError",
    "CheckpointError",
]


class PmNetError(Exception):
    """Base error class for pmnet-related errors."""


class ConfigError(PmNetError, ValueError):
    """Raised when generator parameters or a run configuration are invalid."""


class DatasetFormatError(PmNetError):
    """Raised when a dataset directory is missing files or holds corrupt data."""

    def __init__(self, path: Union[str, Path], message: str) -> None:
        self.path = Path(path)
        self.message = message
        super().__init__(f"{self.path}: {message}")


class InputError(PmNetError, ValueError):
    """Raised when tensors handed to a network component break its shape or box
    contract.
    """


class NumericError(PmNetError, ArithmeticError):
    """Raised when a loss term or a learned parameter is not finite."""

    def __init__(self, message: str, *, term: Optional[str] = None, channel: Optional[int] = None) -> None:
        self.term = term
        self.channel = channel
        super().__init__(message)


class InternalError(PmNetError, RuntimeError):
    """Raised when two internal objects that must agree do not, e.g. a swap step
    applied to clips it was not built for.
    """


class CheckpointError(PmNetError):
    """Raised when a checkpoint cannot be read or was written by an
    incompatible version.
    """
