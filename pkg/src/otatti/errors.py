"""Exception hierarchy shared by the simulator modules."""


class OtaTtiError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(OtaTtiError, ValueError):
    """Invalid configuration, dimensions or degenerate input."""


class ShapeError(OtaTtiError, ValueError):
    """Vector lengths or layer maps do not line up."""


class DefenseSetupError(OtaTtiError, ValueError):
    """A defense statistic is undefined for the given inputs."""


class InspectionUnavailableError(OtaTtiError, RuntimeError):
    """Layer-wise inspection cannot run (for example, no trusted reference)."""


class AggregationError(OtaTtiError, RuntimeError):
    """Nothing to aggregate."""


class NumericalError(OtaTtiError, ArithmeticError):
    """A numerical routine failed (for example, a non-PD kernel matrix)."""
