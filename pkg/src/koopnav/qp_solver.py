"""Dense ADMM solver for  min ½ zᵀPz + qᵀz  s.t.  l <= Gz <= u.

Operator splitting in the style of OSQP: each iteration solves a regularized
linear system (factored once per solve) and projects onto the box [l, u].
Constraint rows are normalized to unit norm before iterating, which is the
same as scaling the penalty of each row by its squared norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor
from scipy.linalg.lapack import dpotrs

from .errors import ParameterError

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible"

RHO_EQ_SCALE = 1e3
RHO_MIN = 1e-6
RHO_MAX = 1e6


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        m = self.G.shape[0]
        if self.P.shape != (n, n) or self.l.size != m or self.u.size != m:
            raise ParameterError(
                f"inconsistent QP dimensions: P{self.P.shape} q({n}) G{self.G.shape} "
                f"l({self.l.size}) u({self.u.size})")
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.q))
                and np.all(np.isfinite(self.G))):
            raise ParameterError("P, q and G must be finite")
        asym = np.linalg.norm(self.P - self.P.T)
        if asym > 1e-10 * max(np.linalg.norm(self.P), 1.0):
            raise ParameterError("P must be symmetric")
        if np.any(self.l > self.u) or np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)):
            raise ParameterError("bounds must satisfy l <= u")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.l.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.q @ z)


@dataclass(frozen=True)
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-8
    max_iter: int = 4000
    check_every: int = 10
    adaptive_rho: bool = True
    adapt_every: int = 50
    polish: bool = True
    scaling_iters: int = 15


@dataclass
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    status: str
    iterations: int
    primal_res: float
    dual_res: float
    objective: float
    polished: bool = False


def kkt_residuals(prob: QpProblem, z, duals) -> tuple[float, float]:
    """Bound violation of ``Gz`` and the stationarity residual ``‖Pz + q + Gᵀy‖∞``."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(duals, dtype=float)
    Gz = prob.G @ z
    viol = np.maximum(prob.l - Gz, 0.0)
    viol = np.maximum(viol, Gz - prob.u)
    primal = float(np.max(viol)) if viol.size else 0.0
    dual = float(np.max(np.abs(prob.P @ z + prob.q + prob.G.T @ y))) if z.size else 0.0
    return primal, dual


def _infeasible(dy: np.ndarray, G: np.ndarray, l: np.ndarray, u: np.ndarray, eps: float) -> bool:
    norm_dy = np.max(np.abs(dy)) if dy.size else 0.0
    if norm_dy < 1e-12:
        return False
    if np.max(np.abs(G.T @ dy)) > eps * norm_dy:
        return False
    pos, neg = dy > 0, dy < 0
    if np.any(np.isinf(u[pos])) or np.any(np.isinf(l[neg])):
        return False
    support = u[pos] @ dy[pos] + l[neg] @ dy[neg]
    return bool(support < -eps * norm_dy)


def _polish(prob: QpProblem, x: np.ndarray, y: np.ndarray, z: np.ndarray,
            rounds: int | None = None, tol: float = 1e-9):
    """Re-solve the KKT system on the active set guessed from an ADMM iterate.

    The guess is corrected one row per round, either dropping the row with the
    most wrong-signed multiplier or adding the most violated row, until the
    set certifies optimality. Returns ``(z, duals)`` or ``None``.
    """
    n, m = prob.n, prob.m
    rounds = 2 * m if rounds is None else rounds
    pinned = (prob.u - prob.l) < 1e-9
    lower = (z - prob.l < -y) | pinned
    upper = (prob.u - z < y) & ~lower
    for _ in range(rounds + 1):
        active = np.flatnonzero(lower | upper)
        target = np.where(lower, prob.l, prob.u)[active]
        Ga = prob.G[active]
        k = len(active)
        K = np.zeros((n + k, n + k))
        K[:n, :n] = prob.P
        K[:n, n:] = Ga.T
        K[n:, :n] = Ga
        sol = np.linalg.lstsq(K, np.concatenate([-prob.q, target]), rcond=None)[0]
        zp = sol[:n]
        duals = np.zeros(m)
        duals[active] = sol[n:]
        Gz = prob.G @ zp
        tol_y = tol * max(1.0, float(np.max(np.abs(duals), initial=0.0)))
        tol_g = tol * max(1.0, float(np.max(np.abs(Gz), initial=0.0)))
        wrong = np.where(lower & ~pinned, duals, 0.0) - np.where(upper & ~pinned, duals, 0.0)
        viol = np.maximum(prob.l - Gz, Gz - prob.u)
        act = lower | upper
        inconsistent = np.abs(Gz - np.where(lower, prob.l, prob.u))[act].max(initial=0.0) > tol_g
        if wrong.max(initial=0.0) > tol_y:
            i = int(np.argmax(wrong))
            lower[i] = upper[i] = False
        elif inconsistent and np.any(act & ~pinned):
            # too many rows for an exact solve: release the weakest one
            cand = np.flatnonzero(act & ~pinned)
            i = int(cand[np.argmin(np.abs(duals[cand]))])
            lower[i] = upper[i] = False
        elif viol.max(initial=0.0) > tol_g:
            i = int(np.argmax(viol))
            lower[i] = Gz[i] < prob.l[i]
            upper[i] = not lower[i]
        else:
            return zp, duals
    return None


def equilibrate(P: np.ndarray, q: np.ndarray, G: np.ndarray, iters: int = 15):
    """Ruiz equilibration of the KKT matrix plus a cost scaling.

    Returns ``(D, E, c)`` such that the scaled problem has data
    ``c D P D``, ``c D q`` and ``E G D``. With ``iters = 0`` this reduces to
    unit-norm constraint rows.
    """
    n, m = len(q), G.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, Gs = P.copy(), G.copy()
    for _ in range(iters):
        col = np.max(np.abs(Ps), axis=0)
        if m:
            col = np.maximum(col, np.max(np.abs(Gs), axis=0))
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(np.max(np.abs(Gs), axis=1), 1e-4, 1e4)) if m else np.ones(0)
        Ps = d[:, None] * Ps * d[None, :]
        Gs = e[:, None] * Gs * d[None, :]
        D *= d
        E *= e
    if iters == 0 and m:
        norms = np.linalg.norm(G, axis=1)
        E = np.where(norms > 0.0, 1.0 / np.where(norms > 0.0, norms, 1.0), 1.0)
    qs = D * q
    mean_col = np.mean(np.max(np.abs(Ps), axis=0)) if n else 1.0
    c = 1.0 / np.clip(max(mean_col, np.max(np.abs(qs), initial=0.0)), 1e-4, 1e4)
    return D, E, float(c)


def solve(prob: QpProblem, settings: QpSettings | None = None,
          warm_z: np.ndarray | None = None, warm_y: np.ndarray | None = None) -> QpSolution:
    """Solve a convex QP by over-relaxed ADMM.

    The data are Ruiz-equilibrated first. The penalty starts at
    ``settings.rho`` per row (x1e3 on equality rows) and, when
    ``adaptive_rho`` is set, is rebalanced from the ratio of primal to dual
    residuals. A converged or stalled iterate is polished on its guessed
    active set when that yields a certified optimum.

    Raises :class:`ParameterError` when ``P`` is not positive semidefinite
    (Cholesky of ``P + sigma I`` fails).
    """
    st = settings or QpSettings()
    n, m = prob.n, prob.m
    try:
        cho_factor(prob.P + st.sigma * np.eye(n))
    except LinAlgError as exc:
        raise ParameterError("P is not positive semidefinite") from exc

    D, E, c = equilibrate(prob.P, prob.q, prob.G, st.scaling_iters)
    P = c * (D[:, None] * prob.P * D[None, :])
    q = c * D * prob.q
    G = E[:, None] * prob.G * D[None, :]
    l = E * prob.l
    u = E * prob.u
    free = np.isinf(l) & np.isinf(u)
    eq = (prob.u - prob.l) < 1e-9
    eye = np.eye(n)
    Gt = np.ascontiguousarray(G.T)

    def penalties(rho0: float) -> np.ndarray:
        rho = np.full(m, rho0)
        rho[free] = RHO_MIN
        rho[eq] = rho0 * RHO_EQ_SCALE
        return np.clip(rho, RHO_MIN, RHO_MAX)

    def factor_for(rho: np.ndarray):
        return cho_factor(P + st.sigma * eye + (G.T * rho) @ G)

    def unscaled(x, z, y):
        return D * x, z / E, E * y / c

    rho_base = st.rho
    rho = penalties(rho_base)
    factor = factor_for(rho)

    x = np.zeros(n) if warm_z is None else np.asarray(warm_z, dtype=float) / D
    z = np.clip(G @ x, l, u)
    y = np.zeros(m) if warm_y is None else c * np.asarray(warm_y, dtype=float) / E

    a = st.alpha
    status = MAX_ITER
    it = 0
    y_check = y.copy()
    for it in range(1, st.max_iter + 1):
        x_t = dpotrs(factor[0], st.sigma * x - q + Gt @ (rho * z - y), lower=factor[1])[0]
        z_t = G @ x_t
        x = a * x_t + (1.0 - a) * x
        z_relax = a * z_t + (1.0 - a) * z
        z = np.clip(z_relax + y / rho, l, u)
        y = y + rho * (z_relax - z)

        if it % st.check_every == 0 or it == st.max_iter:
            xu, zu, yu = unscaled(x, z, y)
            Gx = prob.G @ xu
            Px = prob.P @ xu
            Gty = prob.G.T @ yu
            r_prim = np.max(np.abs(Gx - zu)) if m else 0.0
            r_dual = np.max(np.abs(Px + prob.q + Gty)) if n else 0.0
            n_prim = max(np.max(np.abs(Gx)), np.max(np.abs(zu))) if m else 0.0
            n_dual = max(np.max(np.abs(Px)), np.max(np.abs(Gty)) if m else 0.0,
                         np.max(np.abs(prob.q)))
            if (r_prim <= st.eps_abs + st.eps_rel * n_prim
                    and r_dual <= st.eps_abs + st.eps_rel * n_dual):
                status = OPTIMAL
                break
            if m and _infeasible(E * (y - y_check) / c, prob.G, prob.l, prob.u, st.eps_pinf):
                status = PRIMAL_INFEASIBLE
                break
            y_check = y.copy()
            if st.adaptive_rho and m and it % st.adapt_every == 0:
                # balance residuals measured in the scaled space
                sp = np.max(np.abs(G @ x - z)) / max(np.max(np.abs(G @ x)), np.max(np.abs(z)), 1e-12)
                Pxs, Gtys = P @ x, G.T @ y
                sd = np.max(np.abs(Pxs + q + Gtys)) / max(np.max(np.abs(Pxs)),
                                                          np.max(np.abs(Gtys)),
                                                          np.max(np.abs(q)), 1e-12)
                new = float(np.clip(rho_base * np.sqrt(sp / max(sd, 1e-12)), RHO_MIN, RHO_MAX))
                if new > 5.0 * rho_base or new < 0.2 * rho_base:
                    rho_base = new
                    rho = penalties(rho_base)
                    factor = factor_for(rho)

    x, zu, duals = unscaled(x, z, y)
    polished = False
    if st.polish and m and status != PRIMAL_INFEASIBLE:
        cand = _polish(prob, x, duals, zu)
        if cand is not None:
            zp, yp = cand
            pr_p, dr_p = kkt_residuals(prob, zp, yp)
            pr, dr = kkt_residuals(prob, x, duals)
            if max(pr_p, dr_p) < max(pr, dr) and max(pr_p, dr_p) <= st.eps_abs:
                x, duals, polished = zp, yp, True
                status = OPTIMAL
    pr, dr = kkt_residuals(prob, x, duals)
    return QpSolution(z=x, duals=duals, status=status, iterations=it,
                      primal_res=pr, dual_res=dr, objective=prob.objective(x),
                      polished=polished)


# -- plain-text problem dumps -------------------------------------------------

def _write_block(fh, name: str, arr: np.ndarray) -> None:
    arr = np.atleast_2d(arr)
    fh.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
    for row in arr:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_problem(prob: QpProblem, path: str | Path) -> None:
    """Dump as named blocks: a ``name rows cols`` header then row-major entries."""
    with open(path, "w") as fh:
        fh.write(f"qp {prob.n} {prob.m}\n")
        _write_block(fh, "P", prob.P)
        _write_block(fh, "q", prob.q[None, :])
        _write_block(fh, "G", prob.G if prob.m else np.empty((0, prob.n)))
        _write_block(fh, "l", prob.l[None, :])
        _write_block(fh, "u", prob.u[None, :])


def read_problem(path: str | Path) -> QpProblem:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "qp":
        raise ParameterError(f"{path}: not a QP dump")
    n, m = int(head[1]), int(head[2])
    blocks = {}
    i = 1
    while i < len(lines):
        name, r, c = lines[i].split()
        r, c = int(r), int(c)
        rows = [[float(v) for v in lines[i + 1 + k].split()] for k in range(r)]
        blocks[name] = np.array(rows, dtype=float).reshape(r, c)
        i += 1 + r
    return QpProblem(blocks["P"], blocks["q"].ravel(), blocks["G"].reshape(m, n),
                     blocks["l"].ravel(), blocks["u"].ravel())
