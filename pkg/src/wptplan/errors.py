"""Exception types shared across the package, mapped to CLI exit codes in cli.py."""


class WptplanError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(WptplanError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(InvalidArgumentError):
    """A mathematical function was evaluated outside its domain."""


class InvalidRouteError(WptplanError, ValueError):
    """A route segment is malformed (for example, not depot-terminated)."""


class InvalidStateError(WptplanError, RuntimeError):
    """An operation was invoked from a state it cannot handle."""


class NumericFailureError(WptplanError, RuntimeError):
    """A numeric routine failed to converge or produced non-finite values."""


class InfeasibleClosedFormError(WptplanError, ArithmeticError):
    """The closed-form time allocation is undefined for these inputs."""


class InfeasibleInstanceError(WptplanError, RuntimeError):
    """No feasible plan exists for the instance, even with a fresh vehicle."""

    def __init__(self, message: str, device_id: int | None = None):
        super().__init__(message)
        self.device_id = device_id


class PlanViolationError(WptplanError, ValueError):
    """A route plan failed independent validation."""
