"""Ground-truth obstacle motion, goal definition and scenario documents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ParameterError, ScenarioError
from .mpc import MpcConfig
from .sensing import SensorSpec
from .tracking import TrackerConfig

MOTION_KINDS = ("circular", "figure_eight", "linear", "stationary")


@dataclass(frozen=True)
class MotionSpec:
    """Parametric obstacle path.

    ``center`` is the path's reference point; its z component is the
    flight altitude for the planar families.
    """

    kind: str = "stationary"
    center: tuple[float, float, float] = (0.0, 0.0, 2.0)
    amplitude: float = 0.0
    rate: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in MOTION_KINDS:
            raise ParameterError(f"unknown motion kind {self.kind!r}")
        if not self.amplitude >= 0.0:
            raise ParameterError("amplitude must be non-negative")
        vals = [*self.center, *self.velocity, self.rate, self.phase, self.amplitude]
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError("motion parameters must be finite")


def obstacle_position(motion: MotionSpec, t: float) -> np.ndarray:
    """Center of an obstacle following ``motion`` at time ``t``."""
    if t < 0.0:
        raise ParameterError("t must be non-negative")
    c = np.asarray(motion.center, dtype=float)
    a = motion.amplitude
    th = motion.rate * t + motion.phase
    if motion.kind == "circular":
        return c + np.array([a * math.cos(th), a * math.sin(th), 0.0])
    if motion.kind == "figure_eight":
        # lemniscate of Gerono
        s = math.sin(th)
        return c + np.array([a * s, a * s * math.cos(th), 0.0])
    if motion.kind == "linear":
        return c + np.asarray(motion.velocity, dtype=float) * t
    if motion.kind == "stationary":
        return c.copy()
    raise ParameterError(f"unknown motion kind {motion.kind!r}")


def peak_speed(motion: MotionSpec) -> float:
    a, w = motion.amplitude, abs(motion.rate)
    if motion.kind == "circular":
        return a * w
    if motion.kind == "figure_eight":
        # |d/dth (sin, sin cos)| = sqrt(cos^2 + cos^2(2th)) <= sqrt(2)
        return math.sqrt(2.0) * a * w
    if motion.kind == "linear":
        return float(np.linalg.norm(motion.velocity))
    return 0.0


@dataclass(frozen=True)
class ObstacleTruth:
    id: int
    radius: float
    motion: MotionSpec

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise ParameterError("obstacle radius must be positive")

    def center(self, t: float) -> np.ndarray:
        return obstacle_position(self.motion, t)


@dataclass(frozen=True)
class SimConfig:
    ts: float = 0.2
    duration: float = 60.0
    seed: int = 0
    t_theta: float = 0.6
    t_kappa: float = 1.0
    goal_tol: float = 0.2
    lifting: str = "psi_pva"
    history: int = 10


@dataclass(frozen=True)
class Scenario:
    start: np.ndarray
    goal: np.ndarray
    obstacles: tuple[ObstacleTruth, ...] = ()
    sensor: SensorSpec = field(default_factory=SensorSpec)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    controller: MpcConfig = field(default_factory=MpcConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    kvel: np.ndarray = field(default_factory=lambda: np.full(3, 1.8))
    name: str = "scenario"

    @property
    def steps(self) -> int:
        return int(round(self.sim.duration / self.sim.ts))

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, sim=replace(self.sim, seed=int(seed)))


def advance_world(scenario: Scenario, t: float) -> list[tuple[int, np.ndarray, float]]:
    """Truth pose ``(id, center, radius)`` of every obstacle at time ``t``."""
    return [(ob.id, ob.center(t), ob.radius) for ob in scenario.obstacles]


# -- scenario documents -----------------------------------------------------

_SECTIONS = {"name", "uav", "goal", "obstacles", "sensor", "tracker", "controller", "sim"}


def _vec(value: Any, n: int, what: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        value = [float(value)] * n
    try:
        out = tuple(float(v) for v in value)
    except TypeError as exc:
        raise ScenarioError(f"{what}: expected a list of {n} numbers") from exc
    if len(out) != n or not all(math.isfinite(v) for v in out):
        raise ScenarioError(f"{what}: expected {n} finite numbers, got {value!r}")
    return out


def _fields(cls, section: dict, what: str, vectors: dict[str, int] | None = None) -> dict:
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ScenarioError(f"{what}: unknown keys {sorted(unknown)}")
    out = dict(section)
    for key, n in (vectors or {}).items():
        if key in out:
            out[key] = _vec(out[key], n, f"{what}.{key}")
    return out


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from a parsed document."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ScenarioError(f"unknown sections {sorted(unknown)}")
    try:
        uav = doc.get("uav", {}) or {}
        start_p = _vec(uav.get("position", [0.0, 0.0, 2.0]), 3, "uav.position")
        start_v = _vec(uav.get("velocity", [0.0, 0.0, 0.0]), 3, "uav.velocity")
        kvel = _vec(uav.get("kvel", 1.8), 3, "uav.kvel")
        if "goal" not in doc:
            raise ScenarioError("missing section 'goal'")
        goal = doc["goal"]
        goal = _vec(goal.get("position") if isinstance(goal, dict) else goal, 3, "goal")

        obstacles = []
        for i, ob in enumerate(doc.get("obstacles", []) or []):
            motion = dict(ob.get("motion", {}))
            if "altitude" in motion:
                alt = float(motion.pop("altitude"))
                cx, cy, _ = _vec(motion.get("center", [0.0, 0.0, 0.0]), 3, "center")
                motion["center"] = (cx, cy, alt)
            motion = _fields(MotionSpec, motion, f"obstacles[{i}].motion",
                             {"center": 3, "velocity": 3})
            obstacles.append(ObstacleTruth(
                id=int(ob.get("id", i)),
                radius=float(ob["radius"]),
                motion=MotionSpec(**motion),
            ))
        ids = [ob.id for ob in obstacles]
        if len(set(ids)) != len(ids):
            raise ScenarioError("obstacle ids must be unique")

        sensor = SensorSpec(**_fields(SensorSpec, doc.get("sensor", {}) or {}, "sensor"))
        tracker = TrackerConfig(**_fields(TrackerConfig, doc.get("tracker", {}) or {}, "tracker"))
        ctrl_doc = _fields(MpcConfig, doc.get("controller", {}) or {}, "controller",
                           {"v_max": 3, "u_max": 3})
        if "q" in ctrl_doc:
            q = np.asarray(ctrl_doc["q"], dtype=float)
            ctrl_doc["q"] = np.diag(q) if q.ndim == 1 else q
        controller = MpcConfig(**ctrl_doc)
        sim = SimConfig(**_fields(SimConfig, doc.get("sim", {}) or {}, "sim"))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc

    if not sim.duration > 0.0 or not sim.ts > 0.0:
        raise ScenarioError("sim.duration and sim.ts must be positive")
    ratio = sim.t_kappa / sim.ts
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ScenarioError("sim.t_kappa must be a positive multiple of sim.ts")
    ratio = sim.t_theta / sim.ts
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ScenarioError("sim.t_theta must be a positive multiple of sim.ts")
    if sim.lifting not in ("psi_p", "psi_pv", "psi_pva"):
        raise ScenarioError(f"sim.lifting must be psi_p, psi_pv or psi_pva, got {sim.lifting!r}")
    if not 5 <= sim.history <= 25:
        raise ScenarioError("sim.history must lie in [5, 25]")
    if any(k <= 0 for k in kvel):
        raise ScenarioError("uav.kvel must be positive")
    return Scenario(
        start=np.array(start_p + start_v),
        goal=np.array(goal),
        obstacles=tuple(obstacles),
        sensor=sensor,
        tracker=replace(tracker, ts=sim.ts, t_theta=sim.t_theta, t_kappa=sim.t_kappa),
        controller=controller,
        sim=sim,
        kvel=np.array(kvel),
        name=str(doc.get("name", "scenario")),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read a YAML (or JSON) scenario file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc)
