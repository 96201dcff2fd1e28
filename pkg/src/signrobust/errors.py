"""Exception types shared across the package."""


class SignRobustError(Exception):
    pass


class ShapeError(SignRobustError, ValueError):
    pass


class RangeError(SignRobustError, ValueError):
    pass


class ConfigError(SignRobustError, ValueError):
    pass


class LabelError(SignRobustError, ValueError):
    pass


class DataError(SignRobustError, ValueError):
    pass


class TraceError(SignRobustError, ValueError):
    pass


class _OffsetError(SignRobustError, ValueError):
    """Error tied to a byte position in a binary stream."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointFormatError(_OffsetError):
    pass


class DecodeError(_OffsetError):
    pass


class IngestionError(SignRobustError, OSError):
    def __init__(self, path, reason):
        super().__init__(f"cannot ingest {path}: {reason}")
        self.path = path


class AttackError(SignRobustError):
    def __init__(self, index, cause):
        super().__init__(f"attack failed on example {index}: {cause}")
        self.index = index
        self.__cause__ = cause
