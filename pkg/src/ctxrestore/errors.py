"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class WeightsNotFoundError(RuntimeError):
    """Backbone weights are not present in any configured cache location."""


class NonFiniteLossError(RuntimeError):
    """Training aborted because a loss component became non-finite."""

    def __init__(self, message, iteration=None, breakdown=None):
        super().__init__(message)
        self.iteration = iteration
        self.breakdown = breakdown


class CheckpointError(RuntimeError):
    """Unreadable or version-incompatible training checkpoint."""
