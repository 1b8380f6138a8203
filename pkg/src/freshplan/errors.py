"""Exception hierarchy shared across the package.

DataError and ConfigError mark problems a caller can fix (bad file, bad
settings); the CLI maps them to exit code 2. Everything else that escapes
is treated as an internal error (exit code 3).
"""


class FreshplanError(Exception):
    """Base class for all package errors."""


class DataError(FreshplanError):
    """Invalid, malformed, or out-of-contract input data."""


class InsufficientDataError(DataError):
    """Not enough observations to perform the requested operation."""


class ConfigError(FreshplanError):
    """Invalid configuration values or inconsistent config sections."""


class ShapeError(FreshplanError, ValueError):
    """Dimension mismatch between parameters and inputs."""


class DivergenceError(FreshplanError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")


class FitnessError(FreshplanError):
    """Fitness function returned NaN where a finite value is required."""


class GridTooLargeError(FreshplanError):
    """Oracle instance exceeds the enforced exhaustive-search budget."""


class PipelineStageError(FreshplanError):
    """Wraps a module error with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
