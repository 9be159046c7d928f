"""Exception hierarchy shared across the package."""


class ViscotactError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ViscotactError):
    """Inconsistent grid dimensions, bad config values, missing files."""


class NumericError(ViscotactError):
    """Non-finite inputs, solver breakdown, non-convergence."""


class OrderingError(ViscotactError):
    """Non-monotone timestamps or sequence numbers."""


class FormatError(ViscotactError):
    """Bad magic/version in a serialized container."""


class ShapeError(FormatError):
    """Tensor shape disagrees with the bundle descriptor."""


class CorruptionError(FormatError):
    """Checksum failure or truncated tensor data."""


class SchedulingError(ViscotactError):
    """Action requested at a time no chunk covers."""


class GenerationError(ViscotactError):
    """Scripted expert failed to complete its task."""


class UsageError(ViscotactError):
    """Caller violated an API precondition."""
