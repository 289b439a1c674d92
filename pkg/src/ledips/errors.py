"""Exception hierarchy shared across the engine."""


class LedipsError(Exception):
    """Base class for all errors raised by this package."""


class ProjectionError(LedipsError):
    """A point maps to infinity under the camera homography."""


class GeometryError(LedipsError, ValueError):
    """Vehicle geometry is invalid, or points violate it."""


class InputError(LedipsError, ValueError):
    """Malformed input data (frames, point lists, files)."""


class SequenceError(LedipsError):
    """Frames were delivered out of sequence-number order."""


class ConfigError(LedipsError):
    """Invalid configuration; message carries the offending field or line."""


class OracleLimitError(LedipsError, ValueError):
    """Brute-force enumeration requested beyond its supported size."""


class DecodeError(LedipsError, ValueError):
    """Base class for pose-bus wire decoding failures."""


class LengthError(DecodeError):
    pass


class MagicError(DecodeError):
    pass


class VersionError(DecodeError):
    pass


class ChecksumError(DecodeError):
    pass
