"""Velocity-loop UAV model and its exact zero-order-hold discretization.

Per axis the closed velocity loop is

    p' = v
    v' = -k v + k u

with ``u`` the commanded velocity. The same discrete model serves as the
simulation plant and as the MPC prediction model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, ParameterError

Array = NDArray[np.float64]


@dataclass(frozen=True)
class UavState:
    p: Array
    v: Array

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise DataError("UAV state must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_vector(cls, x) -> UavState:
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(x[:3], x[3:])

    def as_vector(self) -> Array:
        return np.concatenate([self.p, self.v])


@dataclass(frozen=True)
class LtiModel:
    """Discrete model ``x+ = A x + B u`` with state ``[p, v]``."""

    A: Array
    B: Array
    ts: float
    kvel: Array

    @property
    def gains(self) -> Array:
        return np.diag(self.kvel).copy()


def _as_gain_matrix(kvel) -> Array:
    k = np.asarray(kvel, dtype=float)
    if k.ndim == 0:
        k = np.eye(3) * float(k)
    elif k.ndim == 1:
        k = np.diag(k)
    if k.shape != (3, 3):
        raise ParameterError(f"kvel must be 3x3, got shape {k.shape}")
    if np.any(k - np.diag(np.diag(k))):
        raise ParameterError("kvel must be diagonal")
    if np.any(~np.isfinite(k)) or np.any(np.diag(k) <= 0.0):
        raise ParameterError("kvel diagonal entries must be positive")
    return k


def continuous_matrices(kvel) -> tuple[Array, Array]:
    """Continuous-time ``(A_c, B_c)`` of the velocity-loop model."""
    k = _as_gain_matrix(kvel)
    ac = np.zeros((6, 6))
    ac[:3, 3:] = np.eye(3)
    ac[3:, 3:] = -k
    bc = np.zeros((6, 3))
    bc[3:, :] = k
    return ac, bc


def discretize(kvel, ts: float) -> LtiModel:
    """Exact ZOH discretization of the velocity-loop model.

    Per axis with gain ``k`` and ``e = exp(-k ts)``::

        A_axis = [[1, (1 - e)/k], [0, e]]
        B_axis = [ts - (1 - e)/k, 1 - e]
    """
    k = _as_gain_matrix(kvel)
    if not np.isfinite(ts) or ts <= 0.0:
        raise ParameterError(f"ts must be positive, got {ts}")
    gains = np.diag(k)
    decay = np.exp(-gains * ts)
    # expm1 keeps (1 - e)/k accurate for small k*ts
    one_minus = -np.expm1(-gains * ts)
    A = np.eye(6)
    A[:3, 3:] = np.diag(one_minus / gains)
    A[3:, 3:] = np.diag(decay)
    B = np.zeros((6, 3))
    B[:3, :] = np.diag(ts - one_minus / gains)
    B[3:, :] = np.diag(one_minus)
    return LtiModel(A=A, B=B, ts=float(ts), kvel=k)


def step(model: LtiModel, x: UavState | Array, u) -> UavState:
    """Advance one sampling period under a constant velocity command."""
    xv = x.as_vector() if isinstance(x, UavState) else np.asarray(x, dtype=float).reshape(6)
    uv = np.asarray(u, dtype=float).reshape(3)
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(uv))):
        raise DataError("state and command must be finite")
    return UavState.from_vector(model.A @ xv + model.B @ uv)
