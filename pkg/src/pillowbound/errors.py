"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates a mathematical precondition (nonzero boundary, l > u, ...)."""


class DimensionError(ValueError):
    """Grid sizes of two operands do not match."""


class SolverError(RuntimeError):
    """The projection solver failed to converge."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
