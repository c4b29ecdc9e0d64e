"""Exception hierarchy shared by all amsloc modules."""


class AmslocError(Exception):
    """Base class for every error raised by this package."""


class FormatError(AmslocError, ValueError):
    """A file is malformed or truncated."""


class UnsupportedFormatError(AmslocError, ValueError):
    """A well-formed file uses an encoding we do not read."""


class EmptyResultError(AmslocError, ValueError):
    """An operation would produce no output (e.g. audio shorter than one frame)."""


class GeometryError(AmslocError, ValueError):
    pass


class ConfigError(AmslocError, ValueError):
    pass


class TrainingError(AmslocError, ValueError):
    pass


class DegenerateDataError(TrainingError):
    pass


class CompatibilityError(AmslocError, ValueError):
    """Model and features were produced with different pipeline settings."""


class NoDataError(AmslocError, ValueError):
    pass


class NoEstimateError(AmslocError, ValueError):
    pass
