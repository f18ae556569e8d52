"""Exception hierarchy shared by every module of the package."""


class MincutError(Exception):
    """Base class for all library errors."""


class ShapeError(MincutError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(MincutError, ValueError):
    """A user-supplied parameter is out of its valid range."""


class ContractError(MincutError, ValueError):
    """A precondition of an operation was violated."""


class DataError(MincutError, ValueError):
    """Input data is inconsistent (negative weights, size mismatch, ...)."""


class ParseError(MincutError, ValueError):
    """A file could not be parsed.

    ``line`` carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateInputError(MincutError, ValueError):
    """The input makes a loss undefined (edgeless graph, empty cluster)."""


class NumericError(MincutError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""
