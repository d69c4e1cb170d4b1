"""Exception types shared across the package."""

from __future__ import annotations


class FuselageError(Exception):
    """Base class for all package-specific errors."""


class ParseError(FuselageError):
    """A text record could not be parsed.

    Carries enough context (path, line number) to point at the offending
    input without re-reading the file.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


class FormatError(FuselageError):
    """A binary or image payload does not match its declared format."""


class TruncationError(FormatError):
    """A binary payload ended mid-record."""


class CalibrationError(FuselageError):
    """Calibration matrices are missing, malformed, or inconsistent."""


class InsufficientDataError(FuselageError):
    """Not enough samples to compute the requested statistic."""
