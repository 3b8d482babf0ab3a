"""Exception types shared across the package."""


class FolinError(Exception):
    """Base class for package errors."""


class DomainError(FolinError, ValueError):
    """A state or argument lies outside the region where an expression is defined."""


class CapabilityError(FolinError):
    """The request needs a capability the numerical machinery does not offer."""


class SolverError(FolinError, RuntimeError):
    """An iterative solve failed to converge."""

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class IntegrationError(FolinError, RuntimeError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SingularityWarning(UserWarning):
    """Evaluation near a singular surface of the linearizing transformation."""
