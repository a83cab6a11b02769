"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical or numerical parameter is outside its allowed range."""


class DomainError(ValueError):
    """An argument lies outside the domain where a function is defined."""


class SingularityError(DomainError):
    """Evaluation at a point where the kernel diverges."""


class IntegrationError(RuntimeError):
    """A quadrature did not converge or produced a non-finite value."""


class DimensionError(ValueError):
    """Array shape does not match the lattice it is used with."""


class InsufficientDataError(ValueError):
    """Too few samples for the requested statistic."""


class InsufficientVarianceError(InsufficientDataError):
    """The series has zero variance, so correlation times are undefined."""


class ActionBlowupError(FloatingPointError):
    """A Metropolis update produced a non-finite action difference."""


class BasisError(RuntimeError):
    """Operators are inconsistent with the basis they are used on."""


class UnsupportedError(ValueError):
    """Request outside what the implementation supports."""


class ManifestError(ValueError):
    """Run manifest is malformed or its hash does not match its content."""
