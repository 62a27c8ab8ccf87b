"""Exception types raised across the package."""


class StamError(Exception):
    """Base class for every error raised by ``stam``."""


class EmptyUnit(StamError, LookupError):
    pass


class DimensionMismatch(StamError, ValueError):
    pass


class IndexOutOfRange(StamError, IndexError):
    pass


class GeometryError(StamError, ValueError):
    pass


class LengthMismatch(StamError, ValueError):
    pass


class InvalidExemplar(StamError, ValueError):
    """Raised for NaN/Inf or otherwise malformed input vectors."""


class BadMagic(StamError, ValueError):
    pass


class TruncatedFile(StamError, ValueError):
    pass


class TrailingBytes(StamError, ValueError):
    pass


class InsufficientData(StamError, ValueError):
    pass


class EmptyInput(StamError, ValueError):
    pass


class UnlabeledCentroid(StamError, LookupError):
    pass


class ParseError(StamError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(StamError, ValueError):
    pass


class VersionMismatch(StamError, ValueError):
    pass


class CorruptCheckpoint(StamError, ValueError):
    pass
