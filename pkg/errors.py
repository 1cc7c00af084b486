"""
Errors Module - Exception hierarchy and exit codes
Every failure raised by the services derives from NestcastError so the
command layer can map it to a single exit code.
"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3


class NestcastError(Exception):
    """Base class for all nestcast failures."""

    kind = "error"
    exit_code = EXIT_CONFIG


class ConfigurationError(NestcastError, ValueError):
    """Invalid flags, grids or model specifications."""

    kind = "configuration"


class DataFormatError(ConfigurationError):
    """Unreadable or malformed input data."""

    kind = "data"

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class DomainError(NestcastError, ValueError):
    """Argument outside the mathematical domain of a function."""

    kind = "domain"


class SingularMatrixError(NestcastError, ArithmeticError):
    """
    Gram matrix numerically singular.

    Args:
        pivot: zero-based index of the first pivot below tolerance
        t: number of rows in the fit (None outside recursive fits)
    """

    kind = "singular"

    def __init__(self, message: str, pivot: int, t: Optional[int] = None):
        self.pivot = pivot
        self.t = t
        if t is not None:
            message = f"{message} at t={t}"
        super().__init__(f"{message} (pivot {pivot})")


class SegmentIndexError(NestcastError, IndexError):
    """Segment length outside 1..P."""

    kind = "index"


class DegenerateVarianceError(NestcastError, ArithmeticError):
    """A variance used for standardization is zero or negative."""

    kind = "variance degeneracy"
    exit_code = EXIT_DEGENERATE


def exit_code_for(exc: BaseException) -> int:
    """Return the process exit code for an exception raised by a service."""
    if isinstance(exc, NestcastError):
        return exc.exit_code
    return 1


def format_error_line(exc: NestcastError) -> str:
    """Single-line, prefix-parseable diagnostic for stderr."""
    message = " ".join(str(exc).split())
    return f"nestcast: error[{exc.exit_code}] {exc.kind}: {message}"
