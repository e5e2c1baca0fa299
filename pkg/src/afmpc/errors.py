"""Exception types raised across the toolkit."""


class AfmpcError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(AfmpcError, ValueError):
    """An argument is outside its documented domain."""


class PlantStateError(AfmpcError):
    """The simulated plant received non-finite input and must be reset."""


class DegenerateControllerError(AfmpcError):
    """The controller cannot be inverted (leading coefficient is zero)."""


class BadStartError(AfmpcError):
    """The tuning objective is not finite at the initial point."""


class OptimizationError(AfmpcError):
    """Every objective evaluation of the optimizer failed."""


class NumericalDegeneracyError(AfmpcError):
    """The estimator's information matrix lost positive definiteness."""


class PretuneError(AfmpcError):
    """The prior closed-loop experiment produced unusable data."""
