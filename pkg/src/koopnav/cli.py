"""Command-line entry point: ``koopnav run | predict | bench``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ScenarioError
from .world import load_scenario

EXIT_OK, EXIT_SCENARIO, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="koopnav", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="closed-loop mission")
    run.add_argument("scenario")
    run.add_argument("--out", default="out")
    run.add_argument("--seed", type=int)

    pred = sub.add_parser("predict", help="open-loop prediction study")
    pred.add_argument("scenario")
    pred.add_argument("--lifting", choices=["p", "pv", "pva"], default="pva")
    pred.add_argument("--history", type=int, default=10)
    pred.add_argument("--lookahead", type=float, default=1.0, help="seconds")
    pred.add_argument("--seed", type=int)

    b = sub.add_parser("bench", help="timing benchmark")
    b.add_argument("scenario")
    b.add_argument("--reps", type=int, default=100)
    return p


def _run(args, scenario) -> int:
    from .harness import run_closed_loop
    from .plots import emit_plots

    log = run_closed_loop(scenario)
    emit_plots(log, args.out)
    print(f"steps={len(log)} reached_goal={log.reached_goal} "
          f"goal_dist={log.goal_distance():.3f} min_clearance={log.min_clearance():.3f} out={args.out}")
    return EXIT_OK


def _predict(args, scenario) -> int:
    from .harness import evaluate_prediction

    if not 5 <= args.history <= 25:
        raise ScenarioError("--history must lie in [5, 25]")
    if not scenario.obstacles:
        raise ScenarioError("prediction study needs at least one obstacle")
    m = evaluate_prediction(scenario, args.lifting, args.history, args.lookahead)
    if m.insufficient:
        print(f"lifting={m.lifting} history={m.history} insufficient history: no full-window refits")
    else:
        print(f"lifting={m.lifting} history={m.history} lookahead_steps={m.lookahead_steps} "
              f"rmse={m.rmse:.4f} mae={m.mae:.4f} max_err={m.max_err:.4f} samples={m.samples}")
    return EXIT_OK


def _bench(args, scenario) -> int:
    from .harness import bench

    if args.reps < 10:
        raise ScenarioError("--reps must be at least 10")
    for name, s in bench(scenario, args.reps).items():
        print(f"{name}: mean={s.mean_ms:.3f}ms p50={s.p50_ms:.3f}ms p95={s.p95_ms:.3f}ms "
              f"max={s.max_ms:.3f}ms reps={s.reps}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        scenario = load_scenario(args.scenario)
        if getattr(args, "seed", None) is not None:
            scenario = scenario.with_seed(args.seed)
        handler = {"run": _run, "predict": _predict, "bench": _bench}[args.cmd]
        return handler(args, scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
