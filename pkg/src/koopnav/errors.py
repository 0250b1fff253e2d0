"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument is outside its valid domain."""


class InsufficientDataError(ValueError):
    """Not enough samples to perform the requested fit."""


class DataError(ValueError):
    """Input data contains non-finite or otherwise unusable entries."""


class ScenarioError(ValueError):
    """A scenario document failed validation."""
