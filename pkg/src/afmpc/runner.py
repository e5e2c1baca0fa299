"""Closed-loop experiments: single runs, E-FRIT pretuning, and the λ sweep.

Seeds
-----
Every random stream comes from ``numpy.random.SeedSequence`` entropy built
from the base seed and integer keys, so results never depend on execution
order:

* single run: control noise ``[seed, 1]``, pretune noise ``[seed, 0]``
* matrix: pretune noise ``[seed, 0, i_lambda, i_traj, i_case]`` and control
  noise ``[seed, 1, i_lambda, i_traj, i_case, repeat]``. Modes within a cell
  share the control noise, so FMPC and AFMPC see identical disturbances.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from afmpc import kernel
from afmpc.config import CASES, LAMBDAS, ExperimentConfig
from afmpc.errors import AfmpcError, ParameterError, PretuneError
from afmpc.frit import ExtendedGains, PriorData, TuneOptions, TuneReport, tune
from afmpc.signals import TimeSeries, _n_samples, mae, overshoot

TRACE_HEADER = ",".join(kernel.TRACE_COLUMNS)
STATS_HEADER = ("cell_id", "mode", "lambda", "trajectory", "case", "repeat",
                "mae_full", "mae_steady", "overshoot", "violations")
QUARTILE_HEADER = ("cell_id", "mode", "lambda", "trajectory", "case", "n", "n_failed",
                   "mae_steady_q1", "mae_steady_median", "mae_steady_q3",
                   "mae_full_q1", "mae_full_median", "mae_full_q3", "violations_max")

_COL = {name: i for i, name in enumerate(kernel.COLUMNS)}


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


@dataclass(frozen=True)
class RunSummary:
    mae_full: float
    mae_steady: float
    overshoot: float
    violations: int
    wall_time: float = 0.0
    failed: bool = False
    failed_step: int = -1
    guard_holds: int = 0


@dataclass(frozen=True)
class RunRecord:
    """Per-step rows (``kernel.COLUMNS``) up to the last completed step, and the summary."""

    config: ExperimentConfig
    gains0: ExtendedGains
    rows: np.ndarray
    summary: RunSummary

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, _COL[name]]

    @property
    def failed(self) -> bool:
        return self.summary.failed

    def trace_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.rows[:, :len(kernel.TRACE_COLUMNS)], delimiter=",",
                   fmt="%.17g", header=TRACE_HEADER, comments="")
        return buf.getvalue()

    def write_trace(self, path) -> Path:
        path = Path(path)
        path.write_text(self.trace_csv(), encoding="utf-8")
        return path


def summarize(t: np.ndarray, r: np.ndarray, y: np.ndarray, active: np.ndarray, ts: float,
              steady_window: tuple[float, float]) -> tuple[float, float, float, int]:
    """``(mae_full, mae_steady, overshoot, violations)`` from trace columns.

    ``mae_steady`` is NaN when the window is not covered by the trace.
    """
    if t.size == 0:
        return math.nan, math.nan, math.nan, 0
    err = TimeSeries(y - r, ts, float(t[0]))
    mae_full = mae(err)
    lo, hi = steady_window
    if lo >= t[0] - 1e-9 * ts and hi <= t[-1] + 1e-9 * ts:
        mae_steady = mae(err, steady_window)
    else:
        mae_steady = math.nan
    ovs = overshoot(TimeSeries(y, ts, float(t[0])), TimeSeries(r, ts, float(t[0])))
    return mae_full, mae_steady, ovs, int(np.count_nonzero(active == kernel.ACTIVE_VIOLATION))


def _reference(traj, ts: float, duration: float, hp: int) -> np.ndarray:
    """``n + hp`` reference samples; the tail is the exact MPC preview."""
    n = _n_samples(ts, duration)
    full = traj.generate(ts, duration + (hp + 1) * ts).values
    return full[:n + hp]


def _simulate(cfg: ExperimentConfig, gains0: ExtendedGains, traj,
              rng: np.random.Generator, mode: str, backend: str | None):
    n = _n_samples(cfg.ts, cfg.duration)
    r = _reference(traj, cfg.ts, cfg.duration, cfg.mpc.hp)
    noise = cfg.plant.noise_std * rng.standard_normal(n) if cfg.plant.noise_std > 0 else np.zeros(n)
    m = cfg.mpc
    sim = kernel.get_simulate(backend)
    out, failed = sim(kernel.MODES[mode], r, noise, cfg.ts, cfg.plant.as_vector(), cfg.y0,
                      gains0.gains.as_array(), gains0.tc, cfg.rls.as_vector(),
                      [m.hp, m.hu, m.q, m.r_w, m.ru_w, m.u_min, m.u_max],
                      cfg.valve[0], cfg.valve[1])
    return out, int(failed)


def run_closed_loop(cfg: ExperimentConfig, gains0: ExtendedGains | None = None,
                    rng: np.random.Generator | None = None, backend: str | None = None) -> RunRecord:
    """Run one experiment in ``cfg.mode`` and summarise it.

    ``gains0`` are the initial PID gains and PL time constant. When omitted,
    PID mode uses ``cfg.theta0`` and ``cfg.tc0``; the other modes pretune
    with E-FRIT first (:func:`run_pretune`). A numerical failure inside the
    loop ends the run early with ``summary.failed`` set.
    """
    if gains0 is None:
        if cfg.mode == "PID":
            gains0 = ExtendedGains(cfg.theta0, cfg.tc0)
        else:
            gains0 = run_pretune(cfg)[1].theta_star
    rng = rng if rng is not None else _rng(cfg.seed, 1)
    start = time.perf_counter()
    out, failed = _simulate(cfg, gains0, cfg.trajectory, rng, cfg.mode, backend)
    wall = time.perf_counter() - start
    rows = out if failed < 0 else out[:failed]
    mf, ms, ov, viol = summarize(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, _COL["active"]],
                                 cfg.ts, cfg.steady_window)
    holds = int(np.count_nonzero(rows[:, _COL["held"]]))
    summary = RunSummary(mf, ms, ov, viol, wall, failed >= 0, failed, holds)
    return RunRecord(cfg, gains0, rows, summary)


def collect_prior(cfg: ExperimentConfig, rng: np.random.Generator | None = None,
                  backend: str | None = None) -> PriorData:
    """Closed-loop PID experiment with ``cfg.theta0`` on the pretune trajectory."""
    if not any(cfg.theta0.as_array()):
        raise PretuneError("theta0 is all zero: no excitation reaches the plant")
    pcfg = replace(cfg, mode="PID", duration=cfg.pretune_duration, trajectory=cfg.pretune_trajectory)
    rng = rng if rng is not None else _rng(cfg.seed, 0)
    out, failed = _simulate(pcfg, ExtendedGains(cfg.theta0, cfg.tc0), pcfg.trajectory, rng, "PID", backend)
    if failed >= 0:
        raise PretuneError(f"prior experiment failed at step {failed}")
    u0 = out[:, _COL["u_applied"]]
    y0 = out[:, _COL["y"]]
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(y0))):
        raise PretuneError("prior experiment produced non-finite data")
    if np.ptp(u0) == 0.0:
        raise PretuneError("prior input is constant: nothing to tune from")
    return PriorData(TimeSeries(u0, cfg.ts), TimeSeries(y0, cfg.ts))


def run_pretune(cfg: ExperimentConfig, rng: np.random.Generator | None = None,
                opts: TuneOptions | None = None, backend: str | None = None) -> tuple[PriorData, TuneReport]:
    """Collect prior data with ``cfg.theta0``, then tune with E-FRIT at ``cfg.lam``."""
    data = collect_prior(cfg, rng, backend)
    try:
        report = tune(ExtendedGains(cfg.theta0, cfg.tc0), data, cfg.lam, opts)
    except AfmpcError as exc:
        raise PretuneError(f"E-FRIT tuning failed: {exc}") from exc
    return data, report


# ---------------------------------------------------------------- matrix


@dataclass(frozen=True)
class Sweep:
    lambdas: tuple[float, ...] = LAMBDAS
    trajectories: tuple[str, ...] = ("staircase", "sine")
    cases: tuple[int, ...] = (1, 2)
    modes: tuple[str, ...] = ("FMPC", "AFMPC")

    def __post_init__(self):
        if not (self.lambdas and self.trajectories and self.cases and self.modes):
            raise ParameterError("every sweep dimension needs at least one value")
        for c in self.cases:
            if c not in CASES:
                raise ParameterError(f"unknown case {c}")

    @property
    def n_cells(self) -> int:
        return len(self.lambdas) * len(self.trajectories) * len(self.cases) * len(self.modes)


def cell_id(mode: str, lam: float, trajectory: str, case: int) -> str:
    return f"{mode}-lam{lam:g}-{trajectory}-case{case}"


@dataclass(frozen=True)
class StatRow:
    cell_id: str
    mode: str
    lam: float
    trajectory: str
    case: int
    repeat: int
    mae_full: float
    mae_steady: float
    overshoot: float
    violations: int
    failed: bool = False
    message: str = ""

    def as_csv_row(self) -> list:
        return [self.cell_id, self.mode, f"{self.lam:g}", self.trajectory, self.case, self.repeat,
                repr(self.mae_full), repr(self.mae_steady), repr(self.overshoot), self.violations]


@dataclass
class MatrixResult:
    sweep: Sweep
    repeats: int
    rows: list[StatRow] = field(default_factory=list)
    tuned: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def failed(self) -> list[StatRow]:
        return [r for r in self.rows if r.failed]

    def cell_rows(self, mode: str, lam: float, trajectory: str, case: int) -> list[StatRow]:
        return [r for r in self.rows if (r.mode, r.lam, r.trajectory, r.case) == (mode, lam, trajectory, case)]

    def quartiles(self) -> list[list]:
        out = []
        seen = []
        for r in self.rows:
            key = (r.mode, r.lam, r.trajectory, r.case)
            if key not in seen:
                seen.append(key)
        for key in seen:
            rows = self.cell_rows(*key)
            ok = [r for r in rows if not r.failed]
            steady = np.array([r.mae_steady for r in ok], dtype=float)
            full = np.array([r.mae_full for r in ok], dtype=float)
            qs = _quartiles(steady) + _quartiles(full)
            vmax = max((r.violations for r in ok), default=0)
            out.append([cell_id(*key), key[0], f"{key[1]:g}", key[2], key[3], len(rows),
                        len(rows) - len(ok), *[repr(q) for q in qs], vmax])
        return out

    def write(self, out_dir) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"stats": out_dir / "stats.csv", "quartiles": out_dir / "quartiles.csv",
                 "failures": out_dir / "failures.csv"}
        _write_csv(paths["stats"], STATS_HEADER, [r.as_csv_row() for r in self.rows])
        _write_csv(paths["quartiles"], QUARTILE_HEADER, self.quartiles())
        _write_csv(paths["failures"], ("cell_id", "repeat", "message"),
                   [[r.cell_id, r.repeat, r.message] for r in self.failed])
        return paths


def _quartiles(x: np.ndarray) -> list[float]:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return [math.nan] * 3
    return [float(v) for v in np.percentile(x, [25, 50, 75])]


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_group(args) -> tuple[tuple, ExtendedGains | None, list[StatRow]]:
    """One (λ, pretune trajectory, case) group: pretune once, then every mode and repeat."""
    base, sweep, idx, repeats, identical_seeds, backend = args
    li, ti, ci = idx
    lam, traj, case = sweep.lambdas[li], sweep.trajectories[ti], sweep.cases[ci]
    cfg = replace(base.with_case(case), lam=lam,
                  pretune_trajectory=replace(base.pretune_trajectory, kind=traj))
    rows: list[StatRow] = []
    try:
        _, report = run_pretune(cfg, _rng(base.seed, 0, li, ti, ci), backend=backend)
        gains0 = report.theta_star
    except AfmpcError as exc:
        for mode in sweep.modes:
            for rep in range(repeats):
                rows.append(StatRow(cell_id(mode, lam, traj, case), mode, lam, traj, case, rep,
                                    math.nan, math.nan, math.nan, 0, True, f"pretune: {exc}"))
        return idx, None, rows
    for mode in sweep.modes:
        mcfg = replace(cfg, mode=mode)
        for rep in range(repeats):
            rng = _rng(base.seed, 1, li, ti, ci, 0 if identical_seeds else rep)
            cid = cell_id(mode, lam, traj, case)
            rec = run_closed_loop(mcfg, gains0, rng, backend)
            s = rec.summary
            msg = f"aborted at step {s.failed_step}" if s.failed else ""
            rows.append(StatRow(cid, mode, lam, traj, case, rep, s.mae_full, s.mae_steady,
                                s.overshoot, s.violations, s.failed, msg))
    return idx, gains0, rows


def run_matrix(base: ExperimentConfig, sweep: Sweep | None = None, repeats: int | None = None,
               identical_seeds: bool = False, workers: int = 1, out_dir=None,
               backend: str | None = None, progress=None) -> MatrixResult:
    """Every sweep combination, ``repeats`` times each.

    Groups sharing (λ, pretune trajectory, case) reuse one E-FRIT pretune.
    With ``workers > 1`` groups run in separate processes; row order and
    values do not depend on the worker count. Failed pretunes or runs are
    kept as failed rows and the sweep continues.
    """
    sweep = sweep or Sweep()
    repeats = base.repeats if repeats is None else repeats
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    for mode in sweep.modes:
        replace(base, mode=mode)
    jobs = [(base, sweep, (li, ti, ci), repeats, identical_seeds, backend)
            for li in range(len(sweep.lambdas))
            for ti in range(len(sweep.trajectories))
            for ci in range(len(sweep.cases))]
    result = MatrixResult(sweep, repeats)
    start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_group, jobs))
    else:
        done = []
        for job in jobs:
            done.append(_run_group(job))
            if progress is not None:
                progress(len(done), len(jobs))
    by_idx = {idx: (g, rows) for idx, g, rows in done}
    # stable order: mode, lambda, trajectory, case, repeat
    for mode in sweep.modes:
        for li in range(len(sweep.lambdas)):
            for ti in range(len(sweep.trajectories)):
                for ci in range(len(sweep.cases)):
                    gains0, rows = by_idx[(li, ti, ci)]
                    result.tuned[(sweep.lambdas[li], sweep.trajectories[ti], sweep.cases[ci])] = gains0
                    result.rows.extend(r for r in rows if r.mode == mode)
    result.wall_time = time.perf_counter() - start
    if out_dir is not None:
        result.write(out_dir)
    return result


# ---------------------------------------------------------------- replay


def read_trace(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header != TRACE_HEADER:
        raise ParameterError(f"{path}: unexpected trace header {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(kernel.TRACE_COLUMNS)}


def replay(path, steady_window: tuple[float, float] = (55.0, 65.0)) -> RunSummary:
    """Recompute a run summary from a trace CSV."""
    cols = read_trace(path)
    t = cols["t"]
    ts = float(t[1] - t[0]) if t.size > 1 else 1.0
    mf, ms, ov, viol = summarize(t, cols["r"], cols["y"], cols["active"], ts, steady_window)
    return RunSummary(mf, ms, ov, viol)
