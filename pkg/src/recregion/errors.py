"""Exception hierarchy shared by the package."""


class RecRegionError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(RecRegionError, ArithmeticError):
    """A Cholesky pivot collapsed; the matrix is not (numerically) SPD."""


class DomainError(RecRegionError, ValueError):
    """An argument lies outside the domain of a numerical routine."""


class EmptySample(RecRegionError, ValueError):
    pass


class InvalidConfig(RecRegionError, ValueError):
    pass


class DegenerateVariance(RecRegionError, ArithmeticError):
    """The running variance vanished (all observations identical)."""


class NonFiniteState(RecRegionError, ArithmeticError):
    """An estimate overflowed to inf or nan while streaming."""


class ParseError(RecRegionError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
