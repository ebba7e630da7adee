"""Exception types shared across the pipeline."""


class ConfigError(ValueError):
    """Model/config mismatch, e.g. a latent vector of the wrong dimension."""


class InvalidInputError(ValueError):
    """Caller passed data that violates an operation's preconditions."""


class TrainingFault(RuntimeError):
    """Non-finite loss or other unrecoverable state during optimization."""

    def __init__(self, message: str, step: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}


class CheckpointError(RuntimeError):
    """Base class for checkpoint load/save failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this code."""


class CheckpointCorruptionError(CheckpointError):
    """Stored content hash does not match the payload."""
