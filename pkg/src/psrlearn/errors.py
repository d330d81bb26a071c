"""Exception types raised by psrlearn."""


class PsrError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(PsrError, ValueError):
    pass


class EmptyDataError(PsrError, ValueError):
    pass


class WindowError(PsrError, IndexError):
    """A requested feature window runs past the end of a sequence."""


class ZeroProbabilityHistoryError(PsrError, ValueError):
    pass


class DegenerateMomentsError(PsrError, ValueError):
    pass


class ResourceLimitError(PsrError, RuntimeError):
    pass


class DivergenceError(PsrError, FloatingPointError):
    pass


class ModelParseError(PsrError, ValueError):
    """Malformed model document. ``location`` names the offending field."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class UnsupportedVersionError(ModelParseError):
    pass
