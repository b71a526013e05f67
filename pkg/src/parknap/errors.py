"""Exception types raised across the package."""


class ParknapError(Exception):
    """Base class for all package errors."""


class MalformedQueryError(ParknapError, ValueError):
    """A value query referenced an element outside the ground set."""


class InvalidForkError(ParknapError, ValueError):
    pass


class LedgerStateError(ParknapError, RuntimeError):
    """A ledger was used after it was joined, or joined against the wrong parent."""


class DoubleJoinError(LedgerStateError):
    pass


class ContractError(ParknapError, ValueError):
    """A documented precondition of an operation was violated."""


class NumericError(ParknapError, ArithmeticError):
    pass


class EmptyInstanceError(ParknapError, ValueError):
    pass


class BruteForceLimitError(ParknapError, ValueError):
    pass


class InvariantViolation(ParknapError, AssertionError):
    """A per-run guarantee (feasibility, round ceiling, ...) failed to hold."""


class ParseError(ParknapError, ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno
