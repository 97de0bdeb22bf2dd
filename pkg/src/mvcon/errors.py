"""Exception types raised across the toolkit."""


class ShapeError(ValueError):
    pass


class DegenerateEmbeddingError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class InvalidBatchError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class DataIntegrityError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Non-finite loss during training. ``snapshot`` holds the state at failure."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
