"""Exception hierarchy shared by every serda module."""


class SerdaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SerdaError):
    """Array shapes are incompatible for the requested operation."""


class DomainError(SerdaError):
    """A value lies outside the mathematical domain of an operation."""


class ContractError(SerdaError):
    """An API precondition was violated (e.g. backward from a non-scalar)."""


class ConfigError(SerdaError):
    """A configuration value is invalid or out of its allowed range."""


class DataError(SerdaError):
    """A dataset, batch, or label is malformed or unavailable."""


class FormatError(DataError):
    """A file on disk does not match the expected format."""


class DegenerateInputError(DataError):
    """An input is degenerate for the operation (zero signal, zero norm)."""


class InputLengthError(DataError):
    """An input sequence is shorter than the minimum the model accepts."""


class NumericalError(SerdaError):
    """A computation produced non-finite values."""
