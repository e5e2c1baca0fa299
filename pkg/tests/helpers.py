"""Shared synthetic-data builders for the tests."""

import math

import numpy as np

from afmpc.pid import PidGains, PidState, pid_step


def matching_pi(a: float, b: float, tc: float, ts: float) -> PidGains:
    """PI gains under which ``b z^-1 / (1 - a z^-1)`` in closed loop equals the PL model."""
    bp = 1.0 - math.exp(-ts / tc)
    return PidGains(a * bp / b, bp * (1.0 - a) / (b * ts), 0.0)


def lti_closed_loop(gains: PidGains, r: np.ndarray, a: float, b: float, ts: float,
                    noise: np.ndarray | None = None):
    """Closed loop of PID ``gains`` and ``y(k+1) = a y(k) + b u(k)`` from rest."""
    n = r.size
    y = np.zeros(n)
    u = np.zeros(n)
    x = 0.0
    s = PidState()
    for k in range(n):
        y[k] = x + (0.0 if noise is None else noise[k])
        s, u[k] = pid_step(gains, s, r[k] - y[k], ts)
        x = a * x + b * u[k]
    return u, y


def prbs(n: int, hold: int, rng, lo=-1.0, hi=1.0) -> np.ndarray:
    levels = rng.uniform(lo, hi, size=n // hold + 1)
    return np.repeat(levels, hold)[:n]
