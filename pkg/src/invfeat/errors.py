"""Exception hierarchy.  The CLI maps these onto exit codes."""


class InvfeatError(Exception):
    """Base class for package errors."""


class SizeLimitError(InvfeatError, ValueError):
    """A brute-force oracle was asked for a size it refuses to enumerate."""


class ParseError(InvfeatError, ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DegenerateInputError(InvfeatError, ValueError):
    """Input lies in a bad set (tied norms, rank-deficient identifiers, ...)."""


class DomainError(InvfeatError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ReconstructionError(DegenerateInputError):
    """Corner block too ill-conditioned to invert."""

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition number {condition:.3e})")


class NumericalError(InvfeatError, ArithmeticError):
    """Training or evaluation produced a non-finite value."""
