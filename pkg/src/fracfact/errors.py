"""Exception hierarchy shared by the library and the command line."""


class FracfactError(Exception):
    """Base class for all errors raised by fracfact."""

    exit_code = 2


class ParseError(FracfactError, ValueError):
    """An input file or string could not be parsed."""


class ValidationError(FracfactError, ValueError):
    """Inputs parsed but are mutually inconsistent."""


class AliasingError(ValidationError):
    """A model contains terms that the design cannot separate."""


class InvalidMoveError(ValidationError):
    """An imported move is not in the kernel of the bound matrix."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"invalid move at row {row}")


class ConvergenceError(FracfactError, ArithmeticError):
    """Iterative fitting failed to converge."""

    exit_code = 3


class BudgetExceeded(FracfactError, RuntimeError):
    """A combinatorial computation hit its configured size cap."""

    exit_code = 4
