"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a transform or potential term.

    ``term`` names the offending term when raised from the potential, and
    ``value`` carries ``inf`` when the error encodes an infinite transform.
    """

    def __init__(self, message, term=None, value=None):
        super().__init__(message)
        self.term = term
        self.value = value


class SpecError(ValueError):
    """Malformed or inconsistent network specification."""


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""


class QuadratureWarning(RuntimeWarning):
    """Adaptive quadrature hit its maximum order before converging."""
