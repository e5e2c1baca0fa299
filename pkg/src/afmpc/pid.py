"""Positional discrete-time PID, linear in its gains.

The controller is ``u = theta . beta(z) e`` with
``beta(z) = [1, ts / (1 - z^-1), (1 - z^-1) / ts]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from afmpc.errors import ParameterError


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd)):
            raise ParameterError("PID gains must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "PidGains":
        kp, ki, kd = (float(v) for v in theta)
        return cls(kp, ki, kd)

    def __add__(self, other: "PidGains") -> "PidGains":
        return PidGains(self.kp + other.kp, self.ki + other.ki, self.kd + other.kd)


@dataclass(frozen=True)
class PidState:
    integ: float = 0.0
    e_prev: float = 0.0


def pid_step(gains: PidGains, state: PidState, e: float, ts: float) -> tuple[PidState, float]:
    if not ts > 0:
        raise ParameterError("ts must be > 0")
    integ = state.integ + gains.ki * ts * e
    u = gains.kp * e + integ + gains.kd * (e - state.e_prev) / ts
    return PidState(integ=integ, e_prev=e), u


def pid_regressor(e: float, e_prev: float, integ_of_e: float, ts: float) -> np.ndarray:
    """beta(z) applied to an error stream at one sample.

    ``integ_of_e`` is ``ts * sum(e)`` up to the previous sample; the returned
    middle entry includes the current sample.
    """
    if not ts > 0:
        raise ParameterError("ts must be > 0")
    return np.array([e, integ_of_e + ts * e, (e - e_prev) / ts])


def pid_regressor_batch(e: np.ndarray, ts: float) -> np.ndarray:
    """Whole-signal ``beta(z) e`` with zero initial conditions, shape (N, 3)."""
    e = np.asarray(e, dtype=float)
    out = np.empty((e.size, 3))
    out[:, 0] = e
    out[:, 1] = ts * np.cumsum(e)
    out[:, 2] = np.diff(e, prepend=0.0) / ts
    return out


def controller_polynomials(gains: PidGains, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """C(z) as ``num(z^-1) / den(z^-1)`` coefficient arrays."""
    kd_ts = gains.kd / ts
    num = np.array([gains.kp + gains.ki * ts + kd_ts, -(gains.kp + 2.0 * kd_ts), kd_ts])
    den = np.array([1.0, -1.0])
    return num, den


def admissible(gains: PidGains, ts: float) -> bool:
    """True when the numerator of ``C(z)`` has both zeros strictly inside the unit circle.

    Holding the controller output constant then forces a decaying error, so
    a reference governor that pins the output at a bound needs only a
    bounded virtual reference.
    """
    c0, c1, c2 = controller_polynomials(gains, ts)[0]
    return bool(c0 > 0 and abs(c2) < c0 and abs(c1) < c0 + c2)
