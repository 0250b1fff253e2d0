"""Condensed receding-horizon QP with linearized obstacle half-spaces.

Decision vector ``z = [u_0 .. u_{H-1}, s]``: the velocity commands over the
horizon followed by one non-negative slack per avoidance row. States are
eliminated through the prediction matrices ``x_mu = Phi_mu x0 + Gamma_mu U``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError
from .lin_dynamics import LtiModel, UavState
from .qp_solver import MAX_ITER, OPTIMAL, QpProblem, QpSettings, QpSolution, solve

GOLDEN = (1.0 + 5.0**0.5) / 2.0


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    q: np.ndarray = field(default_factory=lambda: np.eye(3))
    v_max: tuple[float, float, float] = (2.0, 2.0, 2.0)
    u_max: tuple[float, float, float] = (3.0, 3.0, 3.0)
    r_uav: float = 0.4
    delta: float = 0.3
    slack_weight: float = 1e4
    slack_linear_weight: float = 1e3
    ground_avoidance: bool = True
    ground_z_min: float = 0.5
    warm_start: bool = True
    max_iter: int = 4000
    qp_eps: float = 1e-3
    qp_polish: bool = False

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if q.shape != (3, 3) or not np.allclose(q, q.T):
            raise ParameterError("Q must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(q)) <= 0.0:
            raise ParameterError("Q must be positive definite")
        if min(self.v_max) <= 0.0 or min(self.u_max) <= 0.0:
            raise ParameterError("v_max and u_max must be positive")
        if not self.slack_weight > 0.0 or self.slack_linear_weight < 0.0:
            raise ParameterError("slack_weight must be positive and slack_linear_weight non-negative")

    def qp_settings(self) -> QpSettings:
        return QpSettings(eps_abs=self.qp_eps, eps_rel=self.qp_eps,
                          max_iter=self.max_iter, polish=self.qp_polish)

    def margin(self, obstacle_radius: float) -> float:
        """Required center distance ``R_uav + R_obstacle + delta``."""
        return self.r_uav + obstacle_radius + self.delta


# -- polytope ---------------------------------------------------------------

def dodecahedron_normals() -> np.ndarray:
    """Unit face normals of a regular dodecahedron, shape (12, 3).

    These are the icosahedron vertices ``(0, ±1, ±phi)`` and their cyclic
    permutations; rows come in opposite pairs.
    """
    base = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            base.append((0.0, s1, s2 * GOLDEN))
    rows = []
    for shift in range(3):
        for v in base:
            rows.append(np.roll(v, shift))
    n = np.array(rows)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


@dataclass(frozen=True)
class Polytope:
    normals: np.ndarray = field(default_factory=dodecahedron_normals)

    def contains(self, y, center, radius: float, tol: float = 0.0) -> np.ndarray:
        """Per-point test of ``eta_j . (y - center) <= radius`` for every face."""
        y = np.atleast_2d(y) - np.asarray(center)
        return np.all(y @ self.normals.T <= radius + tol, axis=1)


class FaceChoice(NamedTuple):
    index: int
    normal: np.ndarray
    rho: float
    degenerate: bool


def select_face(poly: Polytope, uav_now, obs_pred, r_obs: float) -> FaceChoice:
    """Face whose plane has the largest signed distance to the current UAV position."""
    rel = np.asarray(uav_now, dtype=float) - np.asarray(obs_pred, dtype=float)
    if not np.any(rel):
        return FaceChoice(0, poly.normals[0].copy(), -float(r_obs), True)
    rho = poly.normals @ rel - r_obs
    j = int(np.argmax(rho))  # first index on ties
    return FaceChoice(j, poly.normals[j].copy(), float(rho[j]), False)


# -- condensed prediction ----------------------------------------------------

def prediction_matrices(model: LtiModel, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """``Phi`` (6H x 6) and block lower-triangular ``Gamma`` (6H x 3H).

    Row block ``mu - 1`` gives ``x_mu``; block ``(mu, nu)`` of Gamma is
    ``A^(mu-1-nu) B`` for ``nu < mu``.
    """
    A, B = model.A, model.B
    nx, nu = B.shape
    Phi = np.zeros((nx * horizon, nx))
    Gamma = np.zeros((nx * horizon, nu * horizon))
    powers = [np.eye(nx)]
    for _ in range(horizon):
        powers.append(A @ powers[-1])
    for mu in range(1, horizon + 1):
        r = slice(nx * (mu - 1), nx * mu)
        Phi[r] = powers[mu]
        for nu_ in range(mu):
            Gamma[r, nu * nu_:nu * (nu_ + 1)] = powers[mu - 1 - nu_] @ B
    return Phi, Gamma


@dataclass(frozen=True)
class TrackPrediction:
    id: int
    positions: np.ndarray  # (>= H, 3), step mu = 1 .. H
    radius: float


@dataclass(frozen=True)
class AvoidanceConstraint:
    step: int
    track_id: int
    normal: np.ndarray
    offset: float
    margin: float
    face: int
    center: np.ndarray


@dataclass
class MpcQp:
    problem: QpProblem
    horizon: int
    n_slack: int
    Phi: np.ndarray
    Gamma: np.ndarray
    x0: np.ndarray
    constraints: list[AvoidanceConstraint]
    const_cost: float
    degenerate: bool = False

    def decode(self, z) -> np.ndarray:
        """First velocity command of a solution vector."""
        return np.asarray(z, dtype=float)[:3].copy()

    def inputs(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float)[: 3 * self.horizon].reshape(self.horizon, 3)

    def slacks(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float)[3 * self.horizon:]

    def states(self, z) -> np.ndarray:
        """Predicted states ``x_1 .. x_H``, shape (H, 6)."""
        U = np.asarray(z, dtype=float)[: 3 * self.horizon]
        return (self.Phi @ self.x0 + self.Gamma @ U).reshape(self.horizon, 6)

    def cost(self, z) -> float:
        """Tracking cost including the constant terms dropped from the QP."""
        return self.problem.objective(z) + self.const_cost


def _pad(positions: np.ndarray, horizon: int) -> np.ndarray:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        raise ParameterError("empty prediction list")
    if len(positions) < horizon:
        extra = np.repeat(positions[-1:], horizon - len(positions), axis=0)
        positions = np.vstack([positions, extra])
    return positions[:horizon]


def build_qp(model: LtiModel, x0, r, tracks: Sequence[TrackPrediction], cfg: MpcConfig,
             poly: Polytope | None = None) -> MpcQp:
    """Assemble the condensed tracking QP with velocity, input and avoidance rows."""
    poly = poly or Polytope()
    x0 = x0.as_vector() if isinstance(x0, UavState) else np.asarray(x0, dtype=float).reshape(6)
    r = np.asarray(r, dtype=float).reshape(3)
    H = cfg.horizon
    nu = 3 * H
    Phi, Gamma = prediction_matrices(model, H)
    free = Phi @ x0
    pos_rows = np.concatenate([np.arange(6 * k, 6 * k + 3) for k in range(H)])
    vel_rows = pos_rows + 3
    Sp, fp = Gamma[pos_rows], free[pos_rows]
    Sv, fv = Gamma[vel_rows], free[vel_rows]

    # cost: sum_{mu=0..H} |pos_mu - r|_Q^2
    Qbar = np.kron(np.eye(H), cfg.q)
    err = fp - np.tile(r, H)
    P_u = 2.0 * Sp.T @ Qbar @ Sp
    q_u = 2.0 * Sp.T @ Qbar @ err
    e0 = x0[:3] - r
    const = float(err @ Qbar @ err + e0 @ cfg.q @ e0)

    kvel = model.kvel
    v_max = np.asarray(cfg.v_max, dtype=float)
    u_max = np.asarray(cfg.u_max, dtype=float)
    rows, lo, hi = [], [], []

    # velocity bounds, mu = 1..H
    rows.append(Sv)
    lo.append(np.tile(-v_max, H) - fv)
    hi.append(np.tile(v_max, H) - fv)

    # acceleration proxy: -u_max <= Kvel (u_mu - v_mu) <= u_max, mu = 0..H-1
    Kbar = np.kron(np.eye(H), kvel)
    Sv_prev = np.zeros((nu, nu))
    fv_prev = np.zeros(nu)
    Sv_prev[3:] = Sv[:-3]
    fv_prev[:3] = x0[3:]
    fv_prev[3:] = fv[:-3]
    rows.append(Kbar @ (np.eye(nu) - Sv_prev))
    lo.append(np.tile(-u_max, H) + Kbar @ fv_prev)
    hi.append(np.tile(u_max, H) + Kbar @ fv_prev)

    if cfg.ground_avoidance:
        z_rows = np.arange(2, 3 * H, 3)
        rows.append(Sp[z_rows])
        lo.append(cfg.ground_z_min - fp[z_rows])
        hi.append(np.full(H, np.inf))

    constraints: list[AvoidanceConstraint] = []
    av_rows, av_lo = [], []
    degenerate = False
    for tr in tracks:
        preds = _pad(tr.positions, H)
        d = cfg.margin(tr.radius)
        for mu in range(1, H + 1):
            p_mu = preds[mu - 1]
            face = select_face(poly, x0[:3], p_mu, tr.radius)
            degenerate |= face.degenerate
            eta = face.normal
            k = slice(3 * (mu - 1), 3 * mu)
            av_rows.append(eta @ Sp[k])
            av_lo.append(eta @ p_mu + d - eta @ fp[k])
            constraints.append(AvoidanceConstraint(
                mu, tr.id, eta, float(eta @ p_mu + d), d, face.index, p_mu.copy()))

    ns = len(constraints)
    G_blocks = [np.hstack([R, np.zeros((R.shape[0], ns))]) for R in rows]
    if ns:
        G_blocks.append(np.hstack([np.array(av_rows), np.eye(ns)]))
        lo.append(np.array(av_lo))
        hi.append(np.full(ns, np.inf))
        G_blocks.append(np.hstack([np.zeros((ns, nu)), np.eye(ns)]))
        lo.append(np.zeros(ns))
        hi.append(np.full(ns, np.inf))
    G = np.vstack(G_blocks)

    P = np.zeros((nu + ns, nu + ns))
    P[:nu, :nu] = P_u
    P[nu:, nu:] = 2.0 * cfg.slack_weight * np.eye(ns)
    P = 0.5 * (P + P.T)
    # the linear term makes the penalty exact: slack stays zero when a
    # slack-free solution exists and multipliers are below the weight
    qv = np.concatenate([q_u, np.full(ns, cfg.slack_linear_weight)])
    prob = QpProblem(P, qv, G, np.concatenate(lo), np.concatenate(hi))
    return MpcQp(prob, H, ns, Phi, Gamma, x0, constraints, const, degenerate)


def predicted_clearance(mq: MpcQp, z) -> float:
    """Smallest ``|pos_mu - p_mu| - d`` over all avoidance rows (inf without obstacles)."""
    if not mq.constraints:
        return float("inf")
    pos = mq.states(z)[:, :3]
    return float(min(np.linalg.norm(pos[c.step - 1] - c.center) - c.margin
                     for c in mq.constraints))


@dataclass
class StepDiagnostics:
    solve_ms: float
    status: str
    iterations: int
    max_slack: float
    min_clearance: float
    braking: bool = False
    degenerate: bool = False


def control_step(model: LtiModel, x0, r, tracks: Sequence[TrackPrediction], cfg: MpcConfig,
                 warm_z: np.ndarray | None = None,
                 settings: QpSettings | None = None) -> tuple[np.ndarray, StepDiagnostics, MpcQp, QpSolution]:
    """Build and solve one MPC problem; returns the first command and diagnostics.

    A ``max_iter`` result is still applied when its KKT residuals are within
    1e-3; otherwise (and on infeasibility) the braking command ``u = 0`` is
    returned.
    """
    t0 = time.perf_counter()
    mq = build_qp(model, x0, r, tracks, cfg)
    settings = settings or cfg.qp_settings()
    sol = solve(mq.problem, settings, warm_z=warm_z)
    solve_ms = 1e3 * (time.perf_counter() - t0)

    braking = False
    if sol.status == OPTIMAL or (sol.status == MAX_ITER
                                 and max(sol.primal_res, sol.dual_res) <= 1e-3):
        u0 = mq.decode(sol.z)
    else:
        u0 = np.zeros(3)
        braking = True

    slack = mq.slacks(sol.z)
    clearance = predicted_clearance(mq, sol.z)
    diag = StepDiagnostics(
        solve_ms=solve_ms, status=sol.status, iterations=sol.iterations,
        max_slack=float(np.max(slack)) if slack.size else 0.0,
        min_clearance=clearance, braking=braking, degenerate=mq.degenerate)
    return u0, diag, mq, sol
