"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, numerical
failures exit 2.
"""


class DomainError(ValueError):
    """A parameter or phase-space point lies outside the family's domain."""


class ValidationError(ValueError):
    """A computed quantity violates a structural requirement (e.g. L_t <= 0)."""


class ConstructionError(ValueError):
    """A map or operator cannot be built (e.g. the map is not expanding)."""


class AmbiguityError(ValueError):
    """The critical orbit hits the critical point, so a depth is ill-defined."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ResolutionError(ValueError):
    """A scan grid was too coarse to separate neighbouring roots."""


class ResourceError(ValueError):
    """A request would create an unreasonable number of objects."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SpectralError(NumericalError):
    def __init__(self, message, contraction=None):
        super().__init__(message)
        self.contraction = contraction


class VarianceError(NumericalError):
    """Green-Kubo sum came out negative; the autocovariances are attached."""

    def __init__(self, message, covariances=None):
        super().__init__(message)
        self.covariances = covariances


class NearPeriodicWarning(RuntimeWarning):
    """The critical orbit passed within machine distance of c mid-series."""
