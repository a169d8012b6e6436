"""
Error types for the shape-constrained spline toolkit.
Every library error carries a short machine-parseable class so the CLI can
report it on a single line and pick an exit code.
"""

from typing import Optional


class ShapeSplineError(Exception):
    """Base class for all errors raised by this package."""

    error_class = "INTERNAL"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        """Single-line rendering used by the CLI."""
        text = " ".join(str(self.message).split())
        return f"ERROR {self.error_class}: {text}"


class DataParseError(ShapeSplineError):
    error_class = "PARSE"


class DataValidationError(ShapeSplineError):
    error_class = "VALIDATION"


class ConfigError(ShapeSplineError):
    error_class = "CONFIG"


class BasisError(ShapeSplineError):
    error_class = "BASIS"


class KnotPlacementError(BasisError):
    """Quantile knots collided."""

    def __init__(self, message: str, level: Optional[float] = None):
        super().__init__(message)
        self.level = level


class ConstraintError(ShapeSplineError):
    error_class = "CONSTRAINT"


class InfeasibleRegionError(ConstraintError):
    pass


class NumericalError(ShapeSplineError):
    error_class = "NUMERICAL"


class TruncatedSamplingError(NumericalError):
    pass


class SamplerStepError(ShapeSplineError):
    """A Gibbs step failed; keeps the iteration and step name."""

    error_class = "SAMPLER"

    def __init__(self, iteration: int, step: str, cause: Exception):
        super().__init__(f"iteration {iteration}, step '{step}': {cause}")
        self.iteration = iteration
        self.step = step
        self.cause = cause


class ReportMergeError(ShapeSplineError):
    error_class = "REPORT"


class UsageError(ShapeSplineError):
    """Bad command-line usage detected after argument parsing."""

    error_class = "USAGE"


# Error classes that indicate bad input rather than a failed computation
INPUT_ERROR_CLASSES = {"PARSE", "VALIDATION", "CONFIG", "REPORT", "USAGE"}


def exit_code_for(error: ShapeSplineError) -> int:
    """Exit code for a library error: 2 for input problems, 1 otherwise."""
    return 2 if error.error_class in INPUT_ERROR_CLASSES else 1
