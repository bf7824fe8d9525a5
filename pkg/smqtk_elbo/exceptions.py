"""
Exception types raised throughout the package.

Every type derives from a built-in exception so that callers written
against ``ValueError`` / ``RuntimeError`` keep working.
"""
from typing import Optional


class DomainError (ValueError):
    """
    An input lies outside of the domain of a distribution, model or special
    function (e.g. a probability at the boundary of (0, 1), a non-positive
    variance).
    """


class ContractError (ValueError):
    """
    A shape, type or pre-condition contract of an operation was violated.
    """


class NumericalFailure (ArithmeticError):
    """
    A numerical procedure failed to converge or produced non-finite values.
    """


class CapacityError (RuntimeError):
    """
    An exact computation was requested beyond its configured capacity (e.g.
    posterior enumeration over too many latent states).
    """


class DegenerateComponentError (RuntimeError):
    """
    A mixture component received no effective responsibility mass, or its
    weighted estimate left the parameter domain.

    :param component: Index of the offending component.
    :param message: Optional detail message.
    """

    def __init__(self, component: int, message: Optional[str] = None):
        self.component = int(component)
        if message is None:
            message = f"Mixture component {component} is degenerate."
        super().__init__(message)


class UnsupportedError (NotImplementedError):
    """
    The requested operation is not supported for the given family or latent
    variable type.
    """


class NotApplicableError (UnsupportedError):
    """
    The requested criterion part does not apply, e.g. the prior side of the
    parameterization criterion for a model whose prior has no parameters.
    """
