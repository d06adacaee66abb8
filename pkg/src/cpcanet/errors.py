"""Exception types shared across the package."""


class CpcaError(Exception):
    """Base class for all package errors."""


class ShapeError(CpcaError, ValueError):
    """Tensor shapes are inconsistent for the requested operation."""


class NonFiniteError(CpcaError, ValueError):
    """A tensor contains NaN or Inf where finite values are required."""


class ConfigError(CpcaError, ValueError):
    """Invalid or unknown configuration value."""


class CheckpointError(CpcaError, ValueError):
    """Checkpoint file is corrupt or does not match the model."""


class PgmError(CpcaError, ValueError):
    """Malformed PGM file."""


class TrainingDiverged(CpcaError, RuntimeError):
    """Training produced a non-finite loss."""
