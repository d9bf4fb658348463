"""Exception hierarchy shared by all analysis modules."""


class ThresholdSpectraError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(ThresholdSpectraError, ValueError):
    """Unknown catalog tag, bad parameter, or malformed job configuration."""


class DomainError(ThresholdSpectraError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class InconsistencyError(ThresholdSpectraError):
    """Numeric classification disagrees with catalog metadata."""


class InadmissibleMomentumError(ThresholdSpectraError):
    """The band minimum at this momentum is degenerate or not isolated."""


class QuadratureError(ThresholdSpectraError):
    """Base class for quadrature failures."""


class NumericError(QuadratureError):
    """An integrand produced a non-finite sample."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonConvergenceError(QuadratureError):
    """Refinement budget exhausted before the tolerance was met."""

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DivergenceError(QuadratureError):
    """A threshold integral diverges; carries the per-octave growth data."""

    def __init__(self, message, octaves=()):
        super().__init__(message)
        self.octaves = list(octaves)


class ResolutionError(ThresholdSpectraError):
    """A bound state exists but sits closer to the threshold than the eps floor."""


class PoorFitError(ThresholdSpectraError):
    """A regression did not meet its quality gate."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
