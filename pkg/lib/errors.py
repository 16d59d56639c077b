"""
Exception hierarchy for the CUPID matchmaking engine.

Every error carries a CLI exit code so the command layer can map failures
without inspecting messages:
- 1: usage/configuration errors
- 2: data errors (corrupt dataset, schema or shape mismatch)
- 3: numeric failures (NaN/Inf detected)
"""


class CupidError(Exception):
    """Base class for all engine errors."""
    exit_code = 1


class ConfigError(CupidError):
    """Raised when configuration or command-line usage is invalid."""
    exit_code = 1


class DataError(CupidError):
    """Raised when a dataset, file or record violates its contract."""
    exit_code = 2


class ShapeError(DataError):
    """Raised when tensor shapes disagree."""
    pass


class CheckpointError(DataError):
    """Raised when a checkpoint cannot be read or does not match the model schema."""
    pass


class NumericError(CupidError):
    """Raised when a computation produces NaN or Inf."""
    exit_code = 3


class UndefinedMetricError(NumericError):
    """Raised when a metric is undefined for its input (e.g. single-class AUROC)."""
    pass
