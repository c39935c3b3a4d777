"""Error types shared across the package.

Every error derives from ``ValueError`` so callers that only know about the
built-in type keep working. ``exit_code`` is what the command line returns.
"""

from typing import Optional


class AseaError(ValueError):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(AseaError):
    """Invalid configuration value or unknown configuration key."""

    exit_code = 2


class ShapeError(AseaError):
    """Tensor extents do not agree."""

    exit_code = 2


class SequenceLengthError(AseaError):
    """Sequence is too short for the requested operation."""

    exit_code = 3


class ContractError(AseaError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class DataError(AseaError):
    """Input data is malformed or inconsistent."""

    exit_code = 3


class SkeletonParseError(DataError):
    """A skeleton text file could not be parsed."""

    def __init__(self, path: str, line_number: int, message: str) -> None:
        """Initialize with the offending file and 1-based line number."""
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class CheckpointFormatError(DataError):
    """A checkpoint manifest or blob is inconsistent."""

    def __init__(self, message: str, parameter: Optional[str] = None) -> None:
        """Initialize with the name of the offending parameter, if known."""
        self.parameter = parameter
        prefix = f"parameter '{parameter}': " if parameter else ""
        super().__init__(f"{prefix}{message}")


class DivergenceError(AseaError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, step: int, value: float) -> None:
        """Initialize with the optimizer step that diverged."""
        self.step = step
        super().__init__(f"non-finite loss {value} at step {step}")


class GradientCheckError(AseaError):
    """Analytic and numerical gradients disagree."""

    exit_code = 4
