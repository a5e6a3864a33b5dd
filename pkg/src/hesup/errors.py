"""Exception types raised across the package."""


class HesupError(Exception):
    """Base class for all package errors."""


class ShapeError(HesupError, ValueError):
    """Operand shapes are incompatible.

    ``shapes`` holds the offending shapes so callers can inspect them
    without parsing the message.
    """

    def __init__(self, message, *shapes):
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class LabelError(HesupError, ValueError):
    def __init__(self, index, label, num_classes):
        super().__init__(
            f"label {label} at index {index} is outside [0, {num_classes})"
        )
        self.index = index
        self.label = label
        self.num_classes = num_classes


class ConfigError(HesupError, ValueError):
    pass


class DatasetError(HesupError):
    pass


class CheckpointError(HesupError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass
