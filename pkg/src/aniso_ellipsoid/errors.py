"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class InvalidProfile(ValueError):
    """An anisotropy profile fails evenness, sign or normalization checks."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NumericalDomainError(ArithmeticError):
    """A quadrature field produced a non-finite value."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DomainError(ValueError):
    """A point lies on the wrong side of an ellipsoid for the requested formula."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
