"""Exception types shared across the package."""


class QtArrowError(Exception):
    """Base class for errors raised by this package."""


class SingularOperatorError(QtArrowError):
    """A matrix that must be invertible (rank 2) is singular."""


class ImpossibleRecordError(QtArrowError):
    """A supplied readout record has (numerically) zero forward probability."""


class NumericError(QtArrowError):
    """An internal numerical routine failed to converge."""


class ConfigError(QtArrowError):
    """Invalid experiment configuration or command-line usage."""
