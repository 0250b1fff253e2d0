"""Koopman-predicted obstacle avoidance for a multirotor under linear MPC."""

from .errors import DataError, InsufficientDataError, ParameterError, ScenarioError

__all__ = ["DataError", "InsufficientDataError", "ParameterError", "ScenarioError"]
__version__ = "0.1.0"
