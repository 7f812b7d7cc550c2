"""Exception types shared across the package."""


class OmaError(Exception):
    """Base class for all errors raised by beamoma."""


class InvalidArgument(OmaError, ValueError):
    """An input violates a documented precondition."""


class NumericalFailure(OmaError, ArithmeticError):
    """A factorization, eigen solve or root search did not converge."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BandwidthUnresolved(OmaError):
    """Half-power crossings of a peak are not bracketed inside the curve."""


class PairingConflict(OmaError):
    """Two modes of one set map to the same mode of the reference set."""


class ParseError(OmaError, ValueError):
    """A data file does not follow the expected layout."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
