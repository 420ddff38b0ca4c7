"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, codebook, dataset or experiment configuration."""


class DimensionError(ValueError):
    """Vector lengths or array shapes do not agree."""


class SequencingError(RuntimeError):
    """An operation was called out of order (e.g. refining past the last level)."""


class TrainingError(RuntimeError):
    """Non-finite loss, gradient or parameter during training."""

    def __init__(self, message, batch_id=None, checkpoint=None):
        super().__init__(message)
        self.batch_id = batch_id
        self.checkpoint = checkpoint


class DatasetFormatError(IOError):
    """Dataset or checkpoint file is corrupt, truncated or of another version."""
