"""Closed-loop runner, prediction study and timing benchmark."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import koopman
from .lin_dynamics import discretize, step
from .mpc import StepDiagnostics, TrackPrediction, control_step
from .sensing import cluster, filter_cloud, sample_cloud
from .tracking import ObstacleTrack, Tracker, TrackerConfig, embed, fit_window, push_history, smooth_history
from .world import Scenario, advance_world

log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    t: float
    state: np.ndarray
    command: np.ndarray
    diag: StepDiagnostics | None
    truth: list[tuple[int, np.ndarray, float]]
    tracks: list[tuple[int, np.ndarray, float]]
    predictions: dict[int, np.ndarray]
    refit: bool = False


@dataclass
class RunLog:
    scenario: Scenario
    records: list[StepRecord] = field(default_factory=list)
    final_state: np.ndarray | None = None
    final_t: float = 0.0
    reached_goal: bool = False
    refit_steps: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def positions(self) -> np.ndarray:
        return np.array([r.state[:3] for r in self.records])

    def clearances(self) -> np.ndarray:
        """Realized center distance minus required distance, per (step, obstacle).

        The required distance uses the true obstacle radius:
        ``R_uav + R + delta``. Includes the final state as the last row.
        """
        cfg = self.scenario.controller
        states = [(r.t, r.state) for r in self.records]
        if self.final_state is not None:
            states.append((self.final_t, self.final_state))
        obs = self.scenario.obstacles
        out = np.full((len(states), len(obs)), np.inf)
        for i, (t, x) in enumerate(states):
            for j, ob in enumerate(obs):
                out[i, j] = np.linalg.norm(x[:3] - ob.center(t)) - cfg.margin(ob.radius)
        return out

    def min_clearance(self) -> float:
        c = self.clearances()
        return float(c.min()) if c.size else float("inf")

    def goal_distance(self) -> float:
        x = self.final_state if self.final_state is not None else self.records[-1].state
        return float(np.linalg.norm(x[:3] - self.scenario.goal))


def tracker_config(scenario: Scenario) -> TrackerConfig:
    from dataclasses import replace
    s = scenario.sim
    return replace(scenario.tracker, ts=s.ts, t_theta=s.t_theta, t_kappa=s.t_kappa)


class Perception:
    """Sensing, tracking and per-track Koopman models for one run."""

    def __init__(self, scenario: Scenario, lifting: str | None = None, history: int | None = None):
        self.scenario = scenario
        self.cfg = tracker_config(scenario)
        self.tracker = Tracker(self.cfg)
        self.lifting = koopman.lifting_kind(lifting or scenario.sim.lifting)
        self.history = history or scenario.sim.history
        self.rng = np.random.default_rng(scenario.sim.seed)

    def observe(self, k: int, uav_pos: np.ndarray) -> bool:
        """Process the scan at step ``k``; returns True on refit ticks."""
        sc = self.scenario
        t = k * sc.sim.ts
        truth = [(c, r) for _, c, r in advance_world(sc, t)]
        cloud = filter_cloud(sample_cloud(uav_pos, truth, sc.sensor, self.rng, t), uav_pos, sc.sensor)
        obs = cluster(cloud, sc.sensor.link_dist, sc.sensor.min_size)
        tracks = self.tracker.update(obs, k)
        if k % self.cfg.push_steps:
            return False
        for tr in tracks:
            if tr.last_step == k:
                state = embed(tr, self.cfg, k)
                if state is not None:
                    push_history(tr, state, self.cfg, k)
            self.refit(tr, t)
        return True

    def refit(self, tr: ObstacleTrack, t: float) -> None:
        window = fit_window(tr, self.history)
        if window is None:
            tr.model = None
            return
        s = self.scenario.sim
        tr.model = koopman.fit_operator(smooth_history(window, self.cfg), self.lifting,
                                        s.t_theta, s.ts, s.t_kappa, fit_time=t)

    def predict(self, tr: ObstacleTrack, k: int, steps: int) -> np.ndarray:
        """Positions at steps ``k+1 .. k+steps``.

        Uses the track's Koopman model from its freshest embedded state; young
        tracks fall back to constant-velocity extrapolation.
        """
        ts = self.scenario.sim.ts
        gap = k - tr.last_step
        state = embed(tr, self.cfg, tr.last_step)
        if tr.model is not None and state is not None:
            return koopman.predict(tr.model, state, steps + gap)[gap:]
        lag = self.cfg.lag_steps
        prev = tr.log.get(tr.last_step - lag)
        vel = np.zeros(3) if prev is None else (tr.last_centroid - prev) / (lag * ts)
        mu = np.arange(gap + 1, gap + steps + 1)[:, None]
        return tr.last_centroid + vel * mu * ts


def _warm_start(prev_z, horizon: int, n_slack: int):
    if prev_z is None:
        return None
    U = np.asarray(prev_z)[: 3 * horizon].reshape(horizon, 3)
    U = np.vstack([U[1:], U[-1:]])
    return np.concatenate([U.ravel(), np.zeros(n_slack)])


def run_closed_loop(scenario: Scenario) -> RunLog:
    """Simulate perception, prediction and MPC until the goal or the deadline."""
    sim, ctrl = scenario.sim, scenario.controller
    model = discretize(np.diag(scenario.kvel), sim.ts)
    perception = Perception(scenario)
    x = np.asarray(scenario.start, dtype=float).copy()
    log_ = RunLog(scenario)
    prev_z = None
    H = ctrl.horizon
    for k in range(scenario.steps):
        t = k * sim.ts
        refit = perception.observe(k, x[:3])
        if refit:
            log_.refit_steps.append(k)
        tracks = perception.tracker.tracks
        preds = {tr.id: perception.predict(tr, k, H) for tr in tracks}
        tp = [TrackPrediction(tr.id, preds[tr.id], tr.radius_estimate) for tr in tracks]
        n_slack = H * len(tp)
        warm = _warm_start(prev_z, H, n_slack) if ctrl.warm_start else None
        u, diag, mq, sol = control_step(model, x, scenario.goal, tp, ctrl, warm_z=warm)
        prev_z = None if diag.braking else sol.z
        log_.records.append(StepRecord(
            t=t, state=x.copy(), command=u, diag=diag,
            truth=advance_world(scenario, t),
            tracks=[(tr.id, tr.last_centroid.copy(), tr.radius_estimate) for tr in tracks],
            predictions=preds, refit=refit,
        ))
        x = step(model, x, u).as_vector()
        if np.linalg.norm(x[:3] - scenario.goal) <= sim.goal_tol:
            log_.reached_goal = True
            log_.final_state, log_.final_t = x, (k + 1) * sim.ts
            break
    else:
        log_.final_state, log_.final_t = x, scenario.steps * sim.ts
    return log_


@dataclass
class PredictionMetrics:
    rmse: float
    mae: float
    max_err: float
    samples: int
    lifting: str = ""
    history: int = 0
    lookahead_steps: int = 0

    @property
    def insufficient(self) -> bool:
        return self.samples == 0

    @classmethod
    def from_errors(cls, errors, **kw) -> PredictionMetrics:
        e = np.asarray(errors, dtype=float)
        if e.size == 0:
            return cls(float("nan"), float("nan"), float("nan"), 0, **kw)
        return cls(float(np.sqrt(np.mean(e**2))), float(np.mean(e)), float(np.max(e)), int(e.size), **kw)


def prediction_errors(scenario: Scenario, lifting: str, history: int, lookahead: float) -> np.ndarray:
    """Errors of 1..S-step predictions at every refit with a full window.

    The UAV hovers at its start position. Each track is compared with the
    nearest true obstacle.
    """
    sim = scenario.sim
    steps = int(round(lookahead / sim.ts))
    perception = Perception(scenario, lifting, history)
    uav = np.asarray(scenario.start[:3], dtype=float)
    errors = []
    for k in range(scenario.steps):
        if not perception.observe(k, uav):
            continue
        t = k * sim.ts
        if (k + steps) * sim.ts > sim.duration:
            break
        for tr in perception.tracker.tracks:
            if tr.model is None or tr.model.history_len < history:
                continue
            pred = perception.predict(tr, k, steps)
            truth = advance_world(scenario, t)
            ob = min(scenario.obstacles, key=lambda o: np.linalg.norm(o.center(t) - tr.last_centroid))
            for mu in range(1, steps + 1):
                errors.append(np.linalg.norm(pred[mu - 1] - ob.center(t + mu * sim.ts)))
    return np.asarray(errors)


def evaluate_prediction(scenario: Scenario, lifting: str, history: int,
                        lookahead: float = 1.0) -> PredictionMetrics:
    if not scenario.obstacles:
        raise ValueError("prediction study needs at least one obstacle")
    kind = koopman.lifting_kind(lifting)
    errs = prediction_errors(scenario, kind, history, lookahead)
    return PredictionMetrics.from_errors(errs, lifting=kind, history=history,
                                         lookahead_steps=int(round(lookahead / scenario.sim.ts)))


@dataclass
class TimingStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    reps: int

    @classmethod
    def from_samples(cls, seconds) -> TimingStats:
        ms = 1e3 * np.asarray(seconds, dtype=float)
        return cls(float(ms.mean()), float(np.percentile(ms, 50)), float(np.percentile(ms, 95)),
                   float(ms.max()), int(ms.size))


def _bench_history(scenario: Scenario, history: int, rng) -> list[np.ndarray]:
    sim = scenario.sim
    ob = scenario.obstacles[0] if scenario.obstacles else None
    lag = sim.t_theta
    out = []
    for j in range(history):
        t = 10.0 + j * sim.t_kappa
        if ob is None:
            blocks = [np.array([t, 0.0, 2.0]) - np.array([i * lag, 0, 0]) for i in range(3)]
        else:
            blocks = [ob.center(t - i * lag) for i in range(3)]
        out.append(np.concatenate(blocks) + scenario.sensor.noise_sigma * rng.standard_normal(9))
    return out


def bench(scenario: Scenario, reps: int = 100) -> dict[str, TimingStats]:
    """Wall-clock cost of Koopman fit+predict per track and of one MPC solve."""
    if reps < 10:
        raise ValueError("bench needs at least 10 repetitions")
    sim, ctrl = scenario.sim, scenario.controller
    cfg = tracker_config(scenario)
    rng = np.random.default_rng(sim.seed)
    hist = _bench_history(scenario, sim.history, rng)
    H = ctrl.horizon
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        model = koopman.fit_operator(smooth_history(hist, cfg), sim.lifting, sim.t_theta, sim.ts, sim.t_kappa)
        koopman.predict(model, hist[-1], H)
        samples.append(time.perf_counter() - t0)
    koop = TimingStats.from_samples(samples)

    lti = discretize(np.diag(scenario.kvel), sim.ts)
    start, goal = scenario.start[:3], scenario.goal
    samples = []
    for i in range(reps):
        frac = (i % 10) / 10.0
        x = np.concatenate([start + frac * (goal - start), np.zeros(3)])
        t = i % 10 * 1.0
        tracks = []
        for ob in scenario.obstacles:
            pred = np.array([ob.center(t + mu * sim.ts) for mu in range(1, H + 1)])
            tracks.append(TrackPrediction(ob.id, pred, ob.radius))
        t0 = time.perf_counter()
        control_step(lti, x, goal, tracks, ctrl)
        samples.append(time.perf_counter() - t0)
    return {"koopman_fit_predict": koop, "mpc_build_solve": TimingStats.from_samples(samples)}
