"""First-order unit-gain pseudo-linearized (PL) model.

``x(k+1) = a_p x(k) + b_p u_c(k)``, ``y(k) = x(k)`` with
``a_p = exp(-ts/tc)`` and ``b_p = 1 - a_p``. It is both the target the inner
loop is matched to and the MPC predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from afmpc.errors import ParameterError
from afmpc.signals import TimeSeries


@dataclass(frozen=True)
class PlModel:
    tc: float
    ts: float
    x: float = 0.0

    @property
    def a_p(self) -> float:
        return math.exp(-self.ts / self.tc)

    @property
    def b_p(self) -> float:
        # 1 - a_p, not -expm1: keeps the DC gain exactly one
        return 1.0 - self.a_p

    @property
    def c_p(self) -> float:
        return 1.0

    def with_state(self, x: float) -> "PlModel":
        return PlModel(self.tc, self.ts, float(x))


def make_pl(tc: float, ts: float) -> PlModel:
    for name, v in (("tc", tc), ("ts", ts)):
        if not (math.isfinite(v) and v > 0):
            raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
    return PlModel(float(tc), float(ts))


def pl_step(m: PlModel, u_c: float) -> tuple[PlModel, float]:
    """Advance one sample; the returned output is the pre-update ``c_p x(k)``."""
    y = m.c_p * m.x
    return m.with_state(m.a_p * m.x + m.b_p * u_c), y


def pl_filter_array(tc: float, ts: float, u: np.ndarray) -> np.ndarray:
    a = math.exp(-ts / tc)
    return lfilter([0.0, 1.0 - a], [1.0, -a], np.asarray(u, dtype=float))


def pl_filter(tc: float, ts: float, signal: TimeSeries) -> TimeSeries:
    """Zero-state response of the PL model to a whole signal."""
    make_pl(tc, ts)
    return signal.with_values(pl_filter_array(tc, ts, signal.values))
