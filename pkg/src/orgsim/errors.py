"""Exception hierarchy shared by every orgsim subpackage."""


class OrgsimError(Exception):
    """Base class for all orgsim errors."""


class InvalidArgument(OrgsimError, ValueError):
    pass


class DomainError(OrgsimError, ValueError):
    """A query fell outside the domain it is defined on (e.g. out of bounds)."""


class RangeError(OrgsimError, IndexError):
    pass


class ShapeError(OrgsimError, ValueError):
    pass


class NumericError(OrgsimError, ArithmeticError):
    """A computation produced NaN or infinity."""


class ConfigError(OrgsimError, ValueError):
    pass


class DataError(OrgsimError, ValueError):
    pass


class EmptyDataError(DataError):
    pass


class StorageError(OrgsimError, OSError):
    pass


# signal

class WavParseError(OrgsimError, ValueError):
    pass


class WavMagicError(WavParseError):
    pass


class WavTruncatedError(WavParseError):
    pass


class WavUnsupportedError(WavParseError):
    pass


class EmptyEpochsError(DataError):
    pass


class UndefinedCorrelationError(OrgsimError, ValueError):
    pass


# ica

class RankError(OrgsimError, ValueError):
    pass


class ConvergenceError(OrgsimError, RuntimeError):
    """FastICA did not converge. ``delta`` is the last direction change and
    ``model`` the last iterate, for callers that choose to proceed anyway."""

    def __init__(self, message, delta, model=None):
        super().__init__(message)
        self.delta = delta
        self.model = model


# checkpoint / dataset container formats

class FormatError(OrgsimError, ValueError):
    pass


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ChecksumError(FormatError):
    pass
