"""Koopman/EDMD obstacle motion model on delay-embedded position histories.

A history entry is the 9-vector ``[p0, p1, p2]`` of positions ``t_theta``
apart (newest first). Three liftings are supported:

* ``psi_p``   -> ``p0``
* ``psi_pv``  -> ``[p0, (p0 - p1)/t_theta]``
* ``psi_pva`` -> ``[p0, (p0 - p1)/t_theta, (p0 - 2 p1 + p2)/t_theta**2]``

The operator is fitted between consecutive history entries (``t_kappa``
apart) and then rescaled to the control period by a fractional matrix power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InsufficientDataError, ParameterError

LIFT_DIMS = {"psi_p": 3, "psi_pv": 6, "psi_pva": 9}
LIFT_ALIASES = {"p": "psi_p", "pv": "psi_pv", "pva": "psi_pva"}

PINV_RCOND = 1e-10
EIG_COND_MAX = 1e8
RECON_TOL = 1e-6
IMAG_TOL = 1e-8


def lifting_kind(kind: str) -> str:
    kind = LIFT_ALIASES.get(kind, kind)
    if kind not in LIFT_DIMS:
        raise ParameterError(f"unknown lifting {kind!r}")
    return kind


def lift(state, kind: str, t_theta: float) -> np.ndarray:
    kind = lifting_kind(kind)
    if not t_theta > 0.0:
        raise ParameterError("t_theta must be positive")
    s = np.asarray(state, dtype=float).reshape(9)
    p0, p1, p2 = s[:3], s[3:6], s[6:]
    if kind == "psi_p":
        return p0.copy()
    vel = (p0 - p1) / t_theta
    if kind == "psi_pv":
        return np.concatenate([p0, vel])
    acc = (p0 - 2.0 * p1 + p2) / t_theta**2
    return np.concatenate([p0, vel, acc])


def unlift(z, kind: str) -> np.ndarray:
    kind = lifting_kind(kind)
    z = np.asarray(z, dtype=float).ravel()
    if z.size != LIFT_DIMS[kind]:
        raise ParameterError(f"{kind} expects a {LIFT_DIMS[kind]}-vector, got {z.size}")
    return z[:3].copy()


def observable_matrix(history, kind: str, t_theta: float) -> np.ndarray:
    """Columns are the lifted history entries, oldest first."""
    return np.column_stack([lift(s, kind, t_theta) for s in history])


def pinv(X: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD, dropping singular values below ``rcond * s_max``."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(X.T.shape)
    keep = s > rcond * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


@dataclass
class PowerInfo:
    path: str  # "eig", "blend" or "identity"
    eig_cond: float = 1.0
    recon_err: float = 0.0
    imag_err: float = 0.0


def _odd_root_index(alpha: float) -> int | None:
    n = round(1.0 / alpha)
    return n if n % 2 == 1 and abs(n * alpha - 1.0) < 1e-12 else None


def _eig_power(lam: np.ndarray, alpha: float) -> np.ndarray:
    """Principal-branch ``lam**alpha``; real negative eigenvalues take the
    real root when ``1/alpha`` is an odd integer, so the result stays real."""
    lam = lam.astype(complex)
    out = np.zeros_like(lam)
    nz = lam != 0
    out[nz] = np.exp(alpha * np.log(lam[nz]))
    if _odd_root_index(alpha) is not None:
        neg = (np.abs(lam.imag) <= IMAG_TOL * np.abs(lam)) & (lam.real < 0)
        out[neg] = -np.abs(lam[neg].real) ** alpha
    return out


def fractional_power_info(M, alpha: float) -> tuple[np.ndarray, PowerInfo]:
    """``M**alpha`` via complex eigendecomposition, with a first-order fallback.

    Eigenvalues are raised to ``alpha`` on the principal branch and the real
    part of ``V diag(lam**alpha) V^-1`` is returned. When the eigenvector
    basis is ill-conditioned, does not reconstruct ``M``, or the result is
    not real (an eigenvalue on the negative real axis with no real root of
    the requested order), the blend
    ``(1 - alpha) I + alpha M`` is returned instead.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise DataError("matrix must be finite")
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    n = M.shape[0]
    if alpha == 1.0:
        return M.copy(), PowerInfo("identity")
    norm_m = np.linalg.norm(M)
    if norm_m == 0.0:
        return np.zeros_like(M), PowerInfo("eig")

    lam, V = np.linalg.eig(M)
    cond = float(np.linalg.cond(V))
    info = PowerInfo("eig", eig_cond=cond)
    if np.isfinite(cond) and cond <= EIG_COND_MAX:
        Vinv = np.linalg.inv(V)
        info.recon_err = float(np.linalg.norm((V * lam) @ Vinv - M) / norm_m)
        lam_a = _eig_power(lam, alpha)
        R = (V * lam_a) @ Vinv
        info.imag_err = float(np.linalg.norm(R.imag) / max(np.linalg.norm(R), 1e-300))
        if info.recon_err <= RECON_TOL and info.imag_err <= IMAG_TOL:
            return R.real.copy(), info
    info.path = "blend"
    return (1.0 - alpha) * np.eye(n) + alpha * M, info


def fractional_power(M, alpha: float) -> np.ndarray:
    return fractional_power_info(M, alpha)[0]


@dataclass
class KoopmanModel:
    k_coarse: np.ndarray
    k_fine: np.ndarray
    lifting: str
    t_theta: float
    ts: float
    t_kappa: float
    fit_time: float = 0.0
    history_len: int = 0
    power: PowerInfo = field(default_factory=lambda: PowerInfo("eig"))
    rank: int = 0

    @property
    def steps_per_refit(self) -> int:
        return int(round(self.t_kappa / self.ts))

    @property
    def eig_path(self) -> bool:
        return self.power.path in ("eig", "identity")


def fit_operator(history, kind: str, t_theta: float, ts: float, t_kappa: float,
                 fit_time: float = 0.0) -> KoopmanModel:
    """EDMD fit ``K_coarse = Y X^+`` over consecutive history entries.

    ``history`` is ordered oldest first with entries ``t_kappa`` apart. The
    per-sample operator is ``K_coarse ** (ts / t_kappa)``.
    """
    kind = lifting_kind(kind)
    history = [np.asarray(h, dtype=float) for h in history]
    if len(history) < 5:
        raise InsufficientDataError(f"need at least 5 history entries, got {len(history)}")
    if not all(np.all(np.isfinite(h)) for h in history):
        raise DataError("history contains non-finite entries")
    if not (ts > 0.0 and t_kappa >= ts):
        raise ParameterError("need 0 < ts <= t_kappa")
    O = observable_matrix(history, kind, t_theta)
    X, Y = O[:, :-1], O[:, 1:]
    k_coarse = Y @ pinv(X)
    k_fine, info = fractional_power_info(k_coarse, ts / t_kappa)
    return KoopmanModel(
        k_coarse=k_coarse, k_fine=k_fine, lifting=kind, t_theta=t_theta, ts=ts,
        t_kappa=t_kappa, fit_time=fit_time, history_len=len(history), power=info,
        rank=int(np.linalg.matrix_rank(X, tol=None)),
    )


def predict(model: KoopmanModel, state, steps: int) -> np.ndarray:
    """Positions ``steps`` samples ahead, shape ``(steps, 3)``.

    The lifted vector is propagated with the per-sample operator and the
    position block is read off at each step.
    """
    z = lift(state, model.lifting, model.t_theta)
    out = np.empty((steps, 3))
    for mu in range(steps):
        z = model.k_fine @ z
        out[mu] = z[:3]
    return out
