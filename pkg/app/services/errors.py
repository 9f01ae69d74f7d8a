"""
Exception hierarchy for the design services.

Every error carries the process exit code the command line reports for it:
2 for bad input, 3 for numerical failure.
"""

from typing import Optional

from app.services.config import EXIT_INPUT_ERROR, EXIT_NUMERICAL_FAILURE


class MixChoiceError(Exception):
    """Base class for all errors raised by the design services."""

    exit_code = EXIT_INPUT_ERROR


class InvalidArgumentError(MixChoiceError, ValueError):
    pass


class ConfigError(MixChoiceError, ValueError):
    pass


class RegionViolationError(MixChoiceError, ValueError):
    """A point lies outside the simplex, the process cube, or the ingredient bounds."""


class CoxRangeError(MixChoiceError, ValueError):
    """A Cox move would push the moved proportion outside [0, 1]."""


class MomentOverflowError(MixChoiceError, OverflowError):
    pass


class UnsupportedDimensionError(MixChoiceError, ValueError):
    pass


class InvalidCovarianceError(MixChoiceError, ValueError):
    pass


class DesignFormatError(MixChoiceError, ValueError):
    """A design file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularInformationError(MixChoiceError):
    """The information matrix cannot be factorized."""

    exit_code = EXIT_NUMERICAL_FAILURE

    def __init__(self, message: str = "information matrix is singular", draw_index: Optional[int] = None):
        if draw_index is not None:
            message = f"{message} (prior draw {draw_index})"
        super().__init__(message)
        self.draw_index = draw_index


class AllStartsSingularError(MixChoiceError):
    exit_code = EXIT_NUMERICAL_FAILURE

    def __init__(self, n_starts: int, n_sets: int):
        super().__init__(
            f"all {n_starts} starts ended with a singular information matrix; "
            f"try more choice sets than S={n_sets}"
        )
        self.n_starts = n_starts
