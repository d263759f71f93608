"""Exception types shared across the package."""


class RejectedInput(ValueError):
    """Input outside the documented preconditions."""


class DomainError(ValueError):
    """Mathematical precondition violated (non-SPD, non-normalizable, ...)."""


class RangeError(ArithmeticError):
    """Result would overflow double precision."""


class NumericFailure(RuntimeError):
    """Numerical procedure failed (CFL violation, unresolved window, ...)."""
