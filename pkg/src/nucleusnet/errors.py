"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or layer shape/rank mismatch."""


class BuildError(ValueError):
    """Model configuration cannot be assembled into a network."""


class DataError(ValueError):
    """Dataset manifest, clip, or sample construction problem."""


class WavError(ValueError):
    """Malformed or unsupported WAV payload."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class CheckpointError(ValueError):
    """Checkpoint file is invalid, truncated, or incompatible."""


class NumericalError(RuntimeError):
    """Non-finite value encountered during training."""

    def __init__(self, message, tensor_name=None):
        super().__init__(message)
        self.tensor_name = tensor_name
