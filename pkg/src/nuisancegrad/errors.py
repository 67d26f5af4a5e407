"""Exception types shared across the package."""


class NuisanceGradError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(NuisanceGradError):
    """A matrix required to be positive definite failed a pivot check."""


class NoConvergence(NuisanceGradError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class NonFiniteEval(NuisanceGradError):
    """A function evaluation produced NaN or Inf."""


class KindMismatch(NuisanceGradError):
    """A nuisance function of the wrong kind was supplied to a problem."""


class DomainError(NuisanceGradError):
    """An input left the mathematical domain of an operation."""


class Unsupported(NuisanceGradError):
    """The requested quantity has no implementation for this configuration."""


class MissingComponent(NuisanceGradError):
    """A required named model component was not supplied."""


class EmptySample(NuisanceGradError):
    """An operation that needs data received none."""


class NonFiniteIterate(NuisanceGradError):
    """An optimizer iterate diverged past the guard threshold."""

    def __init__(self, message, iteration=None, theta=None):
        super().__init__(message)
        self.iteration = iteration
        self.theta = theta


class StreamExhausted(NuisanceGradError):
    """A sample stream ended before the consumer was done."""


class ParseError(NuisanceGradError):
    """A tabular input file could not be parsed; names the offending cell."""


class MissingColumn(NuisanceGradError):
    """A mapped column is absent from the input file header."""


class ConfigError(NuisanceGradError):
    """A run configuration failed validation; names the field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptySeries(NuisanceGradError):
    """A plot was requested for a selection with no data."""


class NonPositive(NuisanceGradError):
    """Log-scale fitting requires strictly positive values."""
