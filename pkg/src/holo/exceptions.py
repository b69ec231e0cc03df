"""Exception types raised across the package."""


class HoloError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HoloError, ValueError):
    """Invalid optical, training or run configuration."""


class DimensionError(HoloError, ValueError):
    """Array shapes do not agree with each other or with a configuration."""


class ParameterError(HoloError, ValueError):
    """A scalar parameter is outside its admissible range."""


class CorruptCheckpointError(HoloError):
    """A checkpoint's manifest or blobs do not match the target architecture."""


class DivergenceError(HoloError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval
