from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopnav.errors import ParameterError
from koopnav.lin_dynamics import discretize, step
from koopnav.mpc import (
    GOLDEN, MpcConfig, Polytope, TrackPrediction, build_qp, control_step, dodecahedron_normals,
    prediction_matrices, select_face,
)
from koopnav.qp_solver import OPTIMAL, QpSettings, solve

MODEL = discretize(1.8, 0.2)
TIGHT = QpSettings()  # 1e-6 tolerances with polishing


def test_dodecahedron_normals():
    n = dodecahedron_normals()
    assert n.shape == (12, 3)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-15)
    for row in n:
        assert np.min(np.linalg.norm(n + row, axis=1)) < 1e-15
    raw = np.array([0.0, 1.0, GOLDEN]) / np.hypot(1.0, GOLDEN)
    for shift in range(3):
        assert np.min(np.linalg.norm(n - np.roll(raw, shift), axis=1)) < 1e-15


def test_sphere_inside_every_face():
    r = np.random.default_rng(0)
    pts = r.standard_normal((10_000, 3))
    pts = 1.7 * pts / np.linalg.norm(pts, axis=1, keepdims=True) + [1.0, -2.0, 3.0]
    slack = 1.7 - (pts - [1.0, -2.0, 3.0]) @ dodecahedron_normals().T
    assert slack.min() >= -1e-9
    assert Polytope().contains(pts, [1.0, -2.0, 3.0], 1.7, tol=1e-9).all()


def test_select_face_aligned_and_opposite():
    poly = Polytope()
    for j, eta in enumerate(poly.normals):
        f = select_face(poly, 5.0 * eta, np.zeros(3), 1.0)
        assert f.index == j and f.rho == pytest.approx(4.0) and not f.degenerate
        g = select_face(poly, -5.0 * eta, np.zeros(3), 1.0)
        np.testing.assert_allclose(g.normal, -eta, atol=1e-15)


def test_select_face_exhaustive():
    poly = Polytope()
    r = np.random.default_rng(1)
    for _ in range(1000):
        uav, obs = r.normal(0, 5, 3), r.normal(0, 5, 3)
        f = select_face(poly, uav, obs, 0.7)
        rho = [eta @ (uav - obs) - 0.7 for eta in poly.normals]
        assert f.index == int(np.argmax(rho)) and f.rho == pytest.approx(max(rho))


def test_select_face_degenerate():
    f = select_face(Polytope(), np.ones(3), np.ones(3), 0.5)
    assert f.degenerate and f.index == 0


def test_prediction_matrices_structure():
    H = 6
    Phi, Gamma = prediction_matrices(MODEL, H)
    A, B = MODEL.A, MODEL.B
    for mu in range(1, H + 1):
        np.testing.assert_allclose(Phi[6 * (mu - 1):6 * mu], np.linalg.matrix_power(A, mu), atol=1e-15)
        for nu in range(H):
            blk = Gamma[6 * (mu - 1):6 * mu, 3 * nu:3 * nu + 3]
            ref = np.linalg.matrix_power(A, mu - 1 - nu) @ B if nu < mu else np.zeros((6, 3))
            np.testing.assert_allclose(blk, ref, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 25))
def test_condensed_model_equivalence(seed, H):
    r = np.random.default_rng(seed)
    model = discretize(r.uniform(0.5, 3.0, 3), 0.2)
    x0, U = r.normal(0, 2, 6), r.normal(0, 2, (H, 3))
    Phi, Gamma = prediction_matrices(model, H)
    stacked = (Phi @ x0 + Gamma @ U.ravel()).reshape(H, 6)
    x = x0
    for mu in range(H):
        x = step(model, x, U[mu]).as_vector()
        np.testing.assert_allclose(stacked[mu], x, atol=1e-9)


def test_at_goal_at_rest():
    r = np.array([1.0, 2.0, 3.0])
    mq = build_qp(MODEL, np.r_[r, 0, 0, 0], r, [], MpcConfig())
    sol = solve(mq.problem, TIGHT)
    assert np.max(np.abs(sol.z)) <= 1e-6
    assert abs(mq.cost(sol.z)) <= 1e-9
    for _ in range(3):
        u, diag, _, _ = control_step(MODEL, np.r_[r, 0, 0, 0], r, [], MpcConfig())
        assert np.linalg.norm(u) <= 1e-3 and diag.status == OPTIMAL


def test_single_step_matches_least_squares():
    cfg = MpcConfig(horizon=1, q=np.diag([1.0, 2.0, 3.0]))
    x0 = np.array([0.0, 0.0, 2.0, 0.1, -0.1, 0.0])
    r = x0[:3] + [0.02, -0.01, 0.015]
    mq = build_qp(MODEL, x0, r, [], cfg)
    sol = solve(mq.problem, TIGHT)
    # p1 = A_p x0 + B_p u ; minimize |p1 - r|_Q^2 with B_p diagonal
    bp = np.diag(MODEL.B[:3])
    u_ref = (r - (MODEL.A @ x0)[:3]) / bp
    np.testing.assert_allclose(sol.z, u_ref, atol=1e-6)


def blocked_problem(d_extra=0.0):
    cfg = MpcConfig(r_uav=0.4, delta=0.1, horizon=15)
    x0 = np.array([0.0, 0.0, 2.0, 0, 0, 0])
    r = np.array([8.0, 0.0, 2.0])
    R = 0.5 + d_extra  # d = 0.4 + 0.5 + 0.1 = 1.0
    obs = np.array([4.0, 0.3, 2.0])
    return cfg, x0, r, [TrackPrediction(0, np.tile(obs, (cfg.horizon, 1)), R)]


def test_obstacle_between_start_and_goal():
    cfg, x0, r, tracks = blocked_problem()
    mq = build_qp(MODEL, x0, r, tracks, cfg)
    sol = solve(mq.problem, TIGHT)
    assert sol.status == OPTIMAL
    pos = mq.states(sol.z)[:, :3]
    s = mq.slacks(sol.z)
    for c, si in zip(mq.constraints, s):
        assert c.normal @ (pos[c.step - 1] - c.center) >= c.margin - si - 1e-6
    assert mq.constraints[0].margin == pytest.approx(1.0)
    assert s.sum() <= 1e-4


def test_slack_inactive_far_from_path():
    cfg = MpcConfig()
    x0 = np.array([0.0, 0.0, 2.0, 0, 0, 0])
    r = np.array([6.0, 0.0, 2.0])
    tracks = [TrackPrediction(3, np.tile([3.0, 8.0, 2.0], (cfg.horizon, 1)), 0.5)]
    mq = build_qp(MODEL, x0, r, tracks, cfg)
    sol = solve(mq.problem, TIGHT)
    assert np.sum(mq.slacks(sol.z) ** 2) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_current_side_is_safe_side(seed):
    r = np.random.default_rng(seed)
    cfg = MpcConfig(horizon=3)
    x0 = np.r_[r.normal(0, 4, 3), 0, 0, 0]
    p = r.normal(0, 4, 3)
    R = 0.5
    tracks = [TrackPrediction(0, np.tile(p, (3, 1)), R)]
    mq = build_qp(MODEL, x0, np.zeros(3), tracks, cfg)
    for c in mq.constraints:
        rho = c.normal @ (x0[:3] - p) - R
        if rho >= c.margin - R:
            assert c.normal @ x0[:3] > c.offset - 1e-12 or np.isclose(c.normal @ x0[:3], c.offset)


def test_short_predictions_are_padded():
    cfg = MpcConfig(horizon=8)
    tracks = [TrackPrediction(0, np.array([[5.0, 0, 2], [5.1, 0, 2]]), 0.5)]
    mq = build_qp(MODEL, np.r_[0, 0, 2.0, 0, 0, 0], [9.0, 0, 2], tracks, cfg)
    assert len(mq.constraints) == 8
    np.testing.assert_array_equal(mq.constraints[-1].center, [5.1, 0, 2])
    with pytest.raises(ParameterError):
        build_qp(MODEL, np.zeros(6), np.zeros(3), [TrackPrediction(0, np.empty((0, 3)), 0.5)], cfg)


def test_speed_saturates_mid_flight():
    cfg = MpcConfig()
    x = np.array([0.0, 0.0, 2.0, 0, 0, 0])
    r = np.array([10.0, 0.0, 2.0])
    speeds = []
    for _ in range(40):
        u, diag, _, _ = control_step(MODEL, x, r, [], cfg)
        x = step(MODEL, x, u).as_vector()
        speeds.append(np.linalg.norm(x[3:]))
    assert max(speeds) == pytest.approx(2.0, abs=0.05)
    assert max(speeds) <= 2.0 + 1e-3
    assert np.linalg.norm(x[:3] - r) < 0.2


def test_braking_when_unsolved():
    cfg, x0, r, tracks = blocked_problem()
    u, diag, _, _ = control_step(MODEL, x0, r, tracks, cfg,
                                 settings=QpSettings(max_iter=2, polish=False))
    assert diag.braking and np.all(u == 0.0)


def test_config_validation():
    for bad in ({"horizon": 0}, {"q": -np.eye(3)}, {"q": np.ones((2, 2))}, {"v_max": (1, 0, 1)},
                {"slack_weight": 0.0}):
        with pytest.raises(ParameterError):
            MpcConfig(**bad)
    assert MpcConfig().margin(0.5) == pytest.approx(1.2)
