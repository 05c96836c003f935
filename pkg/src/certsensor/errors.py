"""Domain exceptions raised by certsensor.

Every error derives from :class:`CertSensorError` so callers (the CLI in particular) can tell a
domain failure from a programming error.
"""

from __future__ import annotations


class CertSensorError(Exception):
    """Base class of all certsensor errors."""


class ConfigurationError(CertSensorError, ValueError):
    """Raised when a configuration is inconsistent (e.g. empty targeted subset)."""


class InputShapeError(CertSensorError, ValueError):
    """Raised when an input vector or matrix does not match the network dimension."""


class ShapeError(CertSensorError, ValueError):
    """Raised when arrays handed to a solver or loader have inconsistent shapes."""


class EmptyBatchError(CertSensorError, ValueError):
    """Raised when a loss or gradient is requested for an empty batch."""


class DomainError(CertSensorError, ValueError):
    """Raised when an input lies outside the normalized feature range."""


class DivisionDomainError(CertSensorError, ZeroDivisionError):
    """Raised when a relative error is requested for a zero target."""


class SolverDefectError(CertSensorError, RuntimeError):
    """Raised when the simplex detects a situation that cannot happen on valid input."""


class TrainingDivergedError(CertSensorError, FloatingPointError):
    """Raised when an optimizer step produces non-finite weights."""

    def __init__(self, epoch: int, step: int) -> None:
        super().__init__(f"Non-finite weights after step {step} of epoch {epoch}")
        self.epoch = epoch
        self.step = step


class DatasetParseError(CertSensorError, ValueError):
    """Raised when a dataset CSV file is malformed.

    The location is rendered as ``source:row`` where ``row`` counts data rows from 1; row 0 is
    the header.
    """

    def __init__(self, message: str, *, source: str | None = None, row: int | None = None) -> None:
        self.message = message
        self.source = source
        self.row = row
        super().__init__(f"{self.format_location()}: {message}")

    def format_location(self) -> str:
        source = self.source or "<csv>"
        if self.row is None:
            return source
        return f"{source}:{self.row}"


__all__ = [
    "CertSensorError",
    "ConfigurationError",
    "DatasetParseError",
    "DivisionDomainError",
    "DomainError",
    "EmptyBatchError",
    "InputShapeError",
    "ShapeError",
    "SolverDefectError",
    "TrainingDivergedError",
]
