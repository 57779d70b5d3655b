"""Exception hierarchy shared by the library and the command line front end.

Each class carries the process exit code the CLI reports for it.
"""


class FasmError(Exception):
    """Base class for all errors raised by :mod:`fasm`."""

    exit_code = 1


class ArgumentError(FasmError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 1


class DomainError(ArgumentError):
    """A point or knot lies outside the basis domain."""

    exit_code = 1


class ParseError(FasmError, ValueError):
    """Malformed input file or configuration."""

    exit_code = 2

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DimensionError(FasmError, ValueError):
    """Operands are not conformable."""

    exit_code = 3


class SingularityError(FasmError, ArithmeticError):
    """A penalized normal-equation system is numerically singular."""

    exit_code = 4

    def __init__(self, message, alphas=()):
        self.alphas = tuple(alphas)
        super().__init__(message)


class NonFiniteDataError(FasmError, ValueError):
    """Input data contain NaN or infinite values."""

    exit_code = 5


class DegenerateTuningError(FasmError, ArithmeticError):
    """The equivalent degrees of freedom reach the number of grid points."""

    exit_code = 6


EXIT_CODES = {
    0: "success",
    ArgumentError.exit_code: "invalid argument or domain violation",
    ParseError.exit_code: "input or configuration parse error",
    DimensionError.exit_code: "dimension mismatch",
    SingularityError.exit_code: "singular penalized system",
    NonFiniteDataError.exit_code: "non-finite input data",
    DegenerateTuningError.exit_code: "degenerate tuning (df >= p for every alpha)",
}
