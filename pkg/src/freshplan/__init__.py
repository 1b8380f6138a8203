"""Decision support for fresh-food retail: forecast demand with an
attention LSTM, then search prices and replenishment quantities with
particle swarm optimization under a cost-plus baseline."""

from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    FitnessError,
    FreshplanError,
    GridTooLargeError,
    InsufficientDataError,
    PipelineStageError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "FitnessError",
    "FreshplanError",
    "GridTooLargeError",
    "InsufficientDataError",
    "PipelineStageError",
    "ShapeError",
    "__version__",
]
