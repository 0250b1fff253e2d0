from __future__ import annotations

import numpy as np
import pytest

from koopnav.errors import ParameterError
from koopnav.qp_solver import (
    MAX_ITER, OPTIMAL, PRIMAL_INFEASIBLE, QpProblem, QpSettings, kkt_residuals, read_problem, solve,
    write_problem,
)
from oracles import active_set_qp, random_qp

PINNED = QpProblem(np.eye(2), np.zeros(2), np.eye(2), [1.0, 2.0], [1.0, 2.0])
CLIP = QpProblem(np.eye(1), [-3.0], np.eye(1), [0.0], [1.0])


def test_pinned_example():
    sol = solve(PINNED)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0, 2.0], atol=1e-6)
    assert max(kkt_residuals(PINNED, [1.0, 2.0], [-1.0, -2.0])) <= 1e-8


def test_box_clip_example():
    sol = solve(CLIP)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0], atol=1e-6)
    assert kkt_residuals(CLIP, [0.0], [0.0]) == (0.0, 3.0)


def test_dual_residual_definition():
    r = np.random.default_rng(0)
    P, q, G, l, u = random_qp(r)
    prob = QpProblem(P, q, G, l, u)
    z = r.standard_normal(prob.n)
    assert kkt_residuals(prob, z, np.zeros(prob.m))[1] == pytest.approx(np.max(np.abs(P @ z + q)))


@pytest.mark.parametrize("seed", range(60))
def test_matches_active_set_oracle(seed):
    P, q, G, l, u = random_qp(np.random.default_rng(seed))
    prob = QpProblem(P, q, G, l, u)
    sol = solve(prob)
    ref = active_set_qp(P, q, G, l, u)
    assert sol.status == OPTIMAL
    assert np.max(np.abs(sol.z - ref)) <= 1e-5
    pr, dr = kkt_residuals(prob, sol.z, sol.duals)
    st = QpSettings()
    assert pr <= 10 * st.eps_abs and dr <= 10 * st.eps_abs


@pytest.mark.parametrize("seed", range(10))
def test_objective_beats_random_feasible_points(seed):
    r = np.random.default_rng(100 + seed)
    n = 4
    M = r.standard_normal((n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    prob = QpProblem(P, r.standard_normal(n), np.eye(n), -np.ones(n), np.ones(n))
    best = prob.objective(solve(prob).z)
    for z in r.uniform(-1, 1, (100, n)):
        assert best <= prob.objective(z) + 1e-6


def test_deterministic():
    P, q, G, l, u = random_qp(np.random.default_rng(7))
    a, b = solve(QpProblem(P, q, G, l, u)), solve(QpProblem(P, q, G, l, u))
    np.testing.assert_array_equal(a.z, b.z)
    assert a.iterations == b.iterations


def test_primal_infeasible():
    G = np.array([[1.0, 0.0], [1.0, 0.0]])
    prob = QpProblem(np.eye(2), np.zeros(2), G, [2.0, -np.inf], [np.inf, 1.0])
    assert solve(prob).status == PRIMAL_INFEASIBLE


def test_max_iter_status():
    P, q, G, l, u = random_qp(np.random.default_rng(11))
    sol = solve(QpProblem(P, q, G, l, u), QpSettings(max_iter=3, polish=False, eps_abs=1e-12, eps_rel=1e-12))
    assert sol.status == MAX_ITER and sol.iterations == 3


def test_warm_start_reaches_same_optimum():
    P, q, G, l, u = random_qp(np.random.default_rng(21))
    prob = QpProblem(P, q, G, l, u)
    cold = solve(prob)
    warm = solve(prob, warm_z=cold.z, warm_y=cold.duals)
    np.testing.assert_allclose(warm.z, cold.z, atol=1e-5)
    assert warm.iterations <= cold.iterations


def test_lp_like_psd_problem():
    prob = QpProblem(np.zeros((2, 2)), [1.0, 1.0], np.eye(2), [0.5, -1.0], [2.0, 3.0])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [0.5, -1.0], atol=1e-5)


def test_unconstrained():
    prob = QpProblem(2 * np.eye(3), [2.0, -4.0, 0.0], np.empty((0, 3)), [], [])
    np.testing.assert_allclose(solve(prob).z, [-1.0, 2.0, 0.0], atol=1e-5)


@pytest.mark.parametrize("args", [
    (np.eye(2), [0.0], np.eye(2), [0, 0], [1, 1]),
    (np.eye(2), [0.0, 0.0], np.eye(2), [0.0], [1.0, 1.0]),
    (np.array([[1.0, 1.0], [0.0, 1.0]]), [0.0, 0.0], np.eye(2), [0, 0], [1, 1]),
    (np.eye(2), [0.0, 0.0], np.eye(2), [1.0, 0.0], [0.0, 1.0]),
])
def test_invalid_problems(args):
    with pytest.raises(ParameterError):
        QpProblem(*args)


def test_not_psd():
    with pytest.raises(ParameterError):
        solve(QpProblem(np.diag([1.0, -1.0]), [0.0, 0.0], np.eye(2), [0, 0], [1, 1]))


def test_dump_round_trip(tmp_path):
    P, q, G, l, u = random_qp(np.random.default_rng(5))
    prob = QpProblem(P, q, G, l, u)
    write_problem(prob, tmp_path / "p.txt")
    back = read_problem(tmp_path / "p.txt")
    for a, b in ((prob.P, back.P), (prob.q, back.q), (prob.G, back.G), (prob.l, back.l), (prob.u, back.u)):
        np.testing.assert_array_equal(a, b)
    (tmp_path / "bad.txt").write_text("nope 1 1\n")
    with pytest.raises(ParameterError):
        read_problem(tmp_path / "bad.txt")
