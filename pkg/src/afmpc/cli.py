"""Command-line entry point: ``afmpc {run,pretune,matrix,replay}``.

``--trajectory`` selects the trajectory of the E-FRIT prior experiment (the
sweep dimension); the controlled trajectory is ``control.trajectory`` in the
config file and defaults to the staircase.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from afmpc.config import CASES, LAMBDAS, MODES, TRAJECTORIES, ExperimentConfig, load_config
from afmpc.errors import AfmpcError
from afmpc.runner import Sweep, replay, run_closed_loop, run_matrix, run_pretune


def _csv_list(kind):
    def parse(text: str):
        return tuple(kind(v) for v in text.split(",") if v.strip())
    return parse


def _mode(text: str) -> str:
    mode = text.strip().upper()
    if mode not in MODES:
        raise argparse.ArgumentTypeError(f"mode must be one of {', '.join(MODES)}")
    return mode


def _common(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default: runs)")
    p.add_argument("--paper-ts", action="store_true", help="use ts = 1e-4 s instead of 1e-3 s")
    if multi:
        p.add_argument("--mode", type=_csv_list(_mode), help="comma-separated modes (default: FMPC,AFMPC)")
        p.add_argument("--lambda", dest="lam", type=_csv_list(float), help="comma-separated λ values")
        p.add_argument("--trajectory", type=_csv_list(str), help="comma-separated pretune trajectories")
        p.add_argument("--case", type=_csv_list(int), help="comma-separated initial-gain cases")
    else:
        p.add_argument("--mode", type=_mode)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--trajectory", choices=TRAJECTORIES, help="pretune trajectory")
        p.add_argument("--case", type=int, choices=sorted(CASES))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="one closed-loop experiment; writes trace.csv and summary.json"))
    _common(sub.add_parser("pretune", help="prior experiment + E-FRIT tuning; writes prior.csv and tune.json"))
    mx = sub.add_parser("matrix", help="λ × trajectory × case × mode sweep; writes stats.csv and quartiles.csv")
    _common(mx, multi=True)
    mx.add_argument("--repeats", type=int, help="runs per cell (default: 5)")
    mx.add_argument("--workers", type=int, default=1)
    mx.add_argument("--identical-seeds", action="store_true", help="reuse one noise seed for every repeat")
    rp = sub.add_parser("replay", help="recompute summary metrics from a trace CSV")
    rp.add_argument("trace", type=Path)
    rp.add_argument("--steady", type=float, nargs=2, metavar=("START", "END"), default=(55.0, 65.0))
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.paper_ts:
        cfg = cfg.with_paper_ts()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.command in ("run", "pretune"):
        if args.case is not None:
            cfg = cfg.with_case(args.case)
        if args.mode is not None:
            cfg = replace(cfg, mode=args.mode)
        if args.lam is not None:
            cfg = replace(cfg, lam=args.lam)
        if args.trajectory is not None:
            cfg = replace(cfg, pretune_trajectory=replace(cfg.pretune_trajectory, kind=args.trajectory))
    return cfg


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    cfg = _config(args)
    rec = run_closed_loop(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    rec.write_trace(args.out / "trace.csv")
    payload = {"mode": cfg.mode, "lambda": cfg.lam, "case": cfg.case, "seed": cfg.seed,
               "gains0": {**asdict(rec.gains0.gains), "tc": rec.gains0.tc},
               **asdict(rec.summary)}
    _dump(args.out / "summary.json", payload)
    s = rec.summary
    print(f"{cfg.mode}: mae_full={s.mae_full:.4f} mae_steady={s.mae_steady:.4f} "
          f"overshoot={s.overshoot:.4f} violations={s.violations}"
          + (f" FAILED at step {s.failed_step}" if s.failed else ""))
    return 1 if s.failed else 0


def cmd_pretune(args) -> int:
    cfg = _config(args)
    data, report = run_pretune(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "prior.csv", "w", encoding="utf-8") as fh:
        fh.write("t,u0,y0\n")
        for t, u, y in zip(data.u0.t, data.u0.values, data.y0.values):
            fh.write(f"{float(t)!r},{float(u)!r},{float(y)!r}\n")
    th = report.theta_star
    _dump(args.out / "tune.json", {"lambda": report.lam, "kp": th.gains.kp, "ki": th.gains.ki,
                                   "kd": th.gains.kd, "tc": th.tc, "j_value": report.j_value,
                                   "j_tracking": report.j_tracking, "j_input": report.j_input,
                                   "iterations": report.iterations, "converged": report.converged})
    print(f"lambda={report.lam:g}: kp={th.gains.kp:.6g} ki={th.gains.ki:.6g} kd={th.gains.kd:.6g} "
          f"tc={th.tc:.6g} J={report.j_value:.6g}")
    return 0


def cmd_matrix(args) -> int:
    cfg = _config(args)
    default = Sweep()
    sweep = Sweep(lambdas=args.lam or LAMBDAS, trajectories=args.trajectory or default.trajectories,
                  cases=args.case or default.cases, modes=args.mode or default.modes)
    repeats = args.repeats if args.repeats is not None else (cfg.repeats if args.config else 5)

    def progress(done, total):
        print(f"\r{done}/{total} pretune groups", end="", file=sys.stderr, flush=True)

    result = run_matrix(cfg, sweep, repeats, identical_seeds=args.identical_seeds,
                        workers=args.workers, out_dir=args.out, progress=progress)
    print(file=sys.stderr)
    print(f"{len(result.rows)} runs in {result.wall_time:.1f} s, {len(result.failed)} failed; "
          f"wrote {args.out / 'stats.csv'} and {args.out / 'quartiles.csv'}")
    return 0


def cmd_replay(args) -> int:
    s = replay(args.trace, tuple(args.steady))
    print(json.dumps(_jsonable({"mae_full": s.mae_full, "mae_steady": s.mae_steady,
                                "overshoot": s.overshoot, "violations": s.violations}), indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "pretune": cmd_pretune, "matrix": cmd_matrix, "replay": cmd_replay}
    try:
        return handler[args.command](args)
    except AfmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
