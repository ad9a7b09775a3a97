class MicaError(ValueError):
    """Invalid input or configuration."""


class DegenerateDenominator(MicaError):
    """MDC denominator at or below the floor (constant response or conditioner)."""


class DegenerateProjection(MicaError):
    """A projected component of the data is constant."""


class ConfigError(MicaError):
    """Malformed experiment configuration or CSV input."""


class TooManyFailures(MicaError):
    """More than the tolerated share of Monte Carlo replications raised."""


class SingularCovariance(MicaError):
    """Sample covariance is (numerically) rank deficient."""
