"""Compare the compiled and pure-Python closed-loop kernels.

Runs each mode on the default surrogate for a short horizon with both
backends, checks that the traces agree, and reports steps per second.

    python benchmarks/bench_kernels.py [--duration 5] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from afmpc import kernel
from afmpc.config import ExperimentConfig
from afmpc.frit import ExtendedGains
from afmpc.pid import PidGains
from afmpc.runner import run_closed_loop

# typical E-FRIT result on the surrogate, fixed so no pretune enters the timing
GAINS = ExtendedGains(PidGains(0.45, 3.0, 0.0099), 0.067)


def bench(mode: str, backend: str, duration: float, repeats: int) -> tuple[float, np.ndarray]:
    cfg = replace(ExperimentConfig(), mode=mode, duration=duration)
    best = float("inf")
    rows = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        rec = run_closed_loop(cfg, GAINS, backend=backend)
        best = min(best, time.perf_counter() - t0)
        rows = rec.rows
    return best, rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=5.0, help="simulated seconds per run")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernel.available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python fallback is available")
    steps = int(round(args.duration / ExperimentConfig().ts)) + 1
    print(f"{'mode':<6} {'backend':<8} {'time [s]':>9} {'steps/s':>11} {'speedup':>8}")
    for mode in kernel.MODES:
        times = {}
        traces = {}
        for backend in backends:
            times[backend], traces[backend] = bench(mode, backend, args.duration, args.repeats)
        for backend in backends:
            speed = times["python"] / times[backend]
            print(f"{mode:<6} {backend:<8} {times[backend]:>9.3f} {steps / times[backend]:>11.0f} "
                  f"{speed:>7.1f}x")
        if len(traces) == 2:
            diff = np.nanmax(np.abs(traces["cython"] - traces["python"]))
            print(f"{'':<6} max |cython - python| = {diff:.3g}")


if __name__ == "__main__":
    main()
