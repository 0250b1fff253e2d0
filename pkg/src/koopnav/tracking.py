"""Obstacle tracks: association, delay embedding and history buffers."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.signal import savgol_filter

from .errors import ParameterError
from .sensing import ClusterObservation

HISTORY_CAPACITY = 25
MIN_FIT_HISTORY = 5


@dataclass(frozen=True)
class TrackerConfig:
    gate_dist: float | None = None
    v_max_obstacle: float = 2.5
    max_misses: int = 3
    ts: float = 0.2
    t_theta: float = 0.6
    t_kappa: float = 1.0
    sg_window: int = 5
    sg_order: int = 2
    radius_decay: float = 0.99

    def __post_init__(self) -> None:
        if self.sg_window % 2 != 1 or self.sg_window <= self.sg_order:
            raise ParameterError("sg_window must be odd and larger than sg_order")
        if not (self.ts > 0 and self.t_theta > 0 and self.t_kappa > 0):
            raise ParameterError("tracker periods must be positive")
        for name in ("t_theta", "t_kappa"):
            r = getattr(self, name) / self.ts
            if abs(r - round(r)) > 1e-9:
                raise ParameterError(f"{name} must be a multiple of ts")

    @property
    def gate(self) -> float:
        if self.gate_dist is not None:
            return self.gate_dist
        return 1.0 + self.t_kappa * self.v_max_obstacle

    @property
    def lag_steps(self) -> int:
        return int(round(self.t_theta / self.ts))

    @property
    def push_steps(self) -> int:
        return int(round(self.t_kappa / self.ts))


@dataclass
class ObstacleTrack:
    id: int
    last_centroid: np.ndarray
    radius_estimate: float
    last_step: int
    misses: int = 0
    log: dict[int, np.ndarray] = field(default_factory=dict)
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_CAPACITY))
    model: object | None = None

    @property
    def history_len(self) -> int:
        return len(self.history)

    def history_states(self) -> list[np.ndarray]:
        return [s for _, s in self.history]


def _new_track(track_id: int, ob: ClusterObservation, step: int) -> ObstacleTrack:
    c = np.asarray(ob.centroid, dtype=float)
    return ObstacleTrack(id=track_id, last_centroid=c, radius_estimate=float(ob.radius),
                         last_step=step, log={step: c})


def _trim_log(track: ObstacleTrack, cfg: TrackerConfig) -> None:
    keep = 2 * cfg.lag_steps + 1
    if len(track.log) > 4 * keep:
        newest = max(track.log)
        for k in [k for k in track.log if k < newest - 2 * keep]:
            del track.log[k]


def associate(tracks: list[ObstacleTrack], obs: Iterable[ClusterObservation],
              cfg: TrackerConfig, step: int = 0,
              new_id: Callable[[], int] | None = None) -> list[ObstacleTrack]:
    """Greedy nearest-neighbour association of cluster observations to tracks.

    Pairs are taken in ascending centroid distance; pairs beyond the gate are
    rejected. Unmatched observations open new tracks; unmatched tracks accrue
    a miss and are dropped after more than ``max_misses`` consecutive misses.
    """
    obs = list(obs)
    if new_id is None:
        start = max((t.id for t in tracks), default=-1) + 1
        new_id = itertools.count(start).__next__

    pairs = []
    for ti, tr in enumerate(tracks):
        for oi, ob in enumerate(obs):
            d = float(np.linalg.norm(np.asarray(ob.centroid) - tr.last_centroid))
            if d <= cfg.gate:
                pairs.append((d, tr.id, oi, ti))
    pairs.sort()

    used_t: set[int] = set()
    used_o: set[int] = set()
    for _, _, oi, ti in pairs:
        if ti in used_t or oi in used_o:
            continue
        used_t.add(ti)
        used_o.add(oi)
        tr, ob = tracks[ti], obs[oi]
        tr.last_centroid = np.asarray(ob.centroid, dtype=float)
        tr.radius_estimate = max(tr.radius_estimate * cfg.radius_decay, float(ob.radius))
        tr.last_step = step
        tr.misses = 0
        tr.log[step] = tr.last_centroid
        _trim_log(tr, cfg)

    out = []
    for ti, tr in enumerate(tracks):
        if ti not in used_t:
            tr.misses += 1
            if tr.misses > cfg.max_misses:
                continue
        out.append(tr)
    for oi, ob in enumerate(obs):
        if oi not in used_o:
            out.append(_new_track(new_id(), ob, step))
    return out


class Tracker:
    """Owns the track list and a never-reused id counter."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.tracks: list[ObstacleTrack] = []
        self._ids = itertools.count()

    def update(self, obs: Iterable[ClusterObservation], step: int) -> list[ObstacleTrack]:
        self.tracks = associate(self.tracks, obs, self.cfg, step, self._ids.__next__)
        return self.tracks


def embed(track: ObstacleTrack, cfg: TrackerConfig, step: int | None = None) -> np.ndarray | None:
    """Delay-embedded state ``[p(k), p(k - L), p(k - 2L)]``, newest first.

    ``L`` is the embedding lag in samples. Returns ``None`` when any of the
    three samples is missing from the log.
    """
    if step is None:
        step = track.last_step
    lag = cfg.lag_steps
    try:
        blocks = [track.log[step - j * lag] for j in range(3)]
    except KeyError:
        return None
    return np.concatenate(blocks)


def push_history(track: ObstacleTrack, state: np.ndarray, cfg: TrackerConfig, step: int) -> None:
    """Append an embedded state; entries stay exactly ``t_kappa`` apart.

    A gap in the spacing (e.g. after a missed detection) restarts the buffer,
    since the operator fit assumes uniform sampling.
    """
    if track.history:
        last = track.history[-1][0]
        if step - last != cfg.push_steps:
            track.history.clear()
    track.history.append((step, np.asarray(state, dtype=float).copy()))


def fit_window(track: ObstacleTrack, history_len: int = HISTORY_CAPACITY) -> list[np.ndarray] | None:
    """Newest ``min(len, history_len)`` entries, or None below the 5-entry minimum.

    ``history_len`` is clamped to [5, 25].
    """
    n = int(np.clip(history_len, MIN_FIT_HISTORY, HISTORY_CAPACITY))
    states = track.history_states()
    if len(states) < MIN_FIT_HISTORY:
        return None
    return states[-n:]


def smooth_history(states: list[np.ndarray], cfg: TrackerConfig) -> list[np.ndarray]:
    """Savitzky-Golay smoothing of every coordinate sequence in the buffer."""
    if len(states) < cfg.sg_window:
        return [np.array(s, dtype=float) for s in states]
    arr = np.asarray(states, dtype=float)
    sm = savgol_filter(arr, cfg.sg_window, cfg.sg_order, axis=0, mode="interp")
    return list(sm)
