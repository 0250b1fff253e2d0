"""CSV and SVG output for closed-loop runs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import RunLog  # noqa: E402

# repr-exact floats keep reruns byte-identical
_fmt = repr


def _write(path: Path, header: list[str], rows) -> int:
    n = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
            n += 1
    return n


def write_csvs(log: RunLog, out_dir: str | Path) -> dict[str, Path]:
    """Write run, diagnostics, tracks, predictions and obstacle-truth CSVs.

    ``run.csv`` has one row per control step and contains no wall-clock
    data, so identical inputs give identical files. Solver timings live in
    ``diagnostics.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clear = log.clearances()
    paths = {}

    paths["run"] = out / "run.csv"
    _write(paths["run"],
           ["step", "t", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz",
            "status", "braking", "max_slack", "min_clearance"],
           ([k, r.t, *r.state, *r.command, r.diag.status, int(r.diag.braking), r.diag.max_slack,
             float(clear[k].min()) if clear.shape[1] else float("inf")]
            for k, r in enumerate(log.records)))

    paths["diagnostics"] = out / "diagnostics.csv"
    _write(paths["diagnostics"],
           ["step", "t", "solve_ms", "status", "iterations", "max_slack", "min_clearance",
            "ux", "uy", "uz", "degenerate", "refit"],
           ([k, r.t, r.diag.solve_ms, r.diag.status, r.diag.iterations, r.diag.max_slack,
             r.diag.min_clearance, *r.command, int(r.diag.degenerate), int(r.refit)]
            for k, r in enumerate(log.records)))

    paths["tracks"] = out / "tracks.csv"
    _write(paths["tracks"], ["t", "track_id", "x", "y", "z", "radius"],
           ([r.t, tid, *c, rad] for r in log.records for tid, c, rad in r.tracks))

    paths["predictions"] = out / "predictions.csv"
    _write(paths["predictions"], ["t", "track_id", "mu", "x", "y", "z"],
           ([r.t, tid, mu + 1, *p] for r in log.records
            for tid, pred in sorted(r.predictions.items()) for mu, p in enumerate(pred)))

    paths["obstacles"] = out / "obstacles.csv"
    _write(paths["obstacles"], ["t", "obstacle_id", "x", "y", "z", "radius", "clearance"],
           ([r.t, oid, *c, rad, clear[k, j]] for k, r in enumerate(log.records)
            for j, (oid, c, rad) in enumerate(r.truth)))
    return paths


def plot_trajectory(log: RunLog, path: Path) -> None:
    pos = log.positions()
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    ax.plot(pos[:, 0], pos[:, 1], pos[:, 2], color="k", label="UAV")
    ts = [r.t for r in log.records]
    for ob in log.scenario.obstacles:
        c = np.array([ob.center(t) for t in ts])
        ax.plot(c[:, 0], c[:, 1], c[:, 2], "--", label=f"obstacle {ob.id}")
    ax.scatter(*log.scenario.goal, marker="*", s=80, color="tab:red", label="goal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    ax.legend(fontsize="small")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_clearance(log: RunLog, path: Path) -> None:
    """Distance to each obstacle surface against the imposed ``R_uav + delta``."""
    cfg = log.scenario.controller
    ts = np.array([r.t for r in log.records])
    clear = log.clearances()[: len(ts)]
    threshold = cfg.r_uav + cfg.delta
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for j, ob in enumerate(log.scenario.obstacles):
        ax.plot(ts, clear[:, j] + threshold, label=f"obstacle {ob.id}")
    ax.axhline(threshold, color="r", ls="--", label="imposed minimum")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("distance to surface [m]")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_predictions(log: RunLog, path: Path) -> None:
    """Top view of refit-tick predictions over the true obstacle paths."""
    fig, ax = plt.subplots(figsize=(6, 6))
    ts = [r.t for r in log.records]
    for ob in log.scenario.obstacles:
        c = np.array([ob.center(t) for t in ts])
        ax.plot(c[:, 0], c[:, 1], color="0.6", lw=1)
    for r in log.records:
        if not r.refit:
            continue
        for pred in r.predictions.values():
            ax.plot(pred[:, 0], pred[:, 1], color="tab:blue", lw=0.8, alpha=0.6)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(log: RunLog, out_dir: str | Path) -> list[Path]:
    if not log.records:
        raise ValueError("cannot plot an empty run")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = list(write_csvs(log, out).values())
    plot_trajectory(log, out / "trajectory.svg")
    files.append(out / "trajectory.svg")
    if log.scenario.obstacles:
        plot_clearance(log, out / "clearance.svg")
        plot_predictions(log, out / "predictions.svg")
        files += [out / "clearance.svg", out / "predictions.svg"]
    return files
