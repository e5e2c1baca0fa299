"""Reference trajectories, the sampled-signal container, and tracking metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from afmpc.errors import ParameterError


def _check_positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal.

    ``values[k]`` is the sample at time ``t0 + k * ts``.
    """

    values: np.ndarray
    ts: float
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ParameterError("TimeSeries needs a non-empty 1-D array")
        _check_positive("ts", self.ts)
        if not math.isfinite(self.t0):
            raise ParameterError("t0 must be finite")
        if not np.all(np.isfinite(values)):
            raise ParameterError("TimeSeries values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.ts * np.arange(self.values.size)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.ts, self.t0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,value\n")
            for t, v in zip(self.t, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["t", "value"]:
                raise ParameterError(f"{path}: expected header 't,value', got {header}")
            rows = [(float(a), float(b)) for a, b in reader]
        if not rows:
            raise ParameterError(f"{path}: no samples")
        t = np.array([r[0] for r in rows])
        v = np.array([r[1] for r in rows])
        ts = float(t[1] - t[0]) if t.size > 1 else 1.0
        return cls(v, ts, float(t[0]))


def _n_samples(ts: float, duration: float) -> int:
    _check_positive("ts", ts)
    _check_positive("duration", duration)
    # guard against floor(10/0.01) landing on 999.9999
    return int(math.floor(duration / ts + 1e-9)) + 1


def gen_sine(amplitude: float, offset: float, freq: float, ts: float, duration: float) -> TimeSeries:
    """``offset + amplitude * sin(2 pi freq t)`` sampled every ``ts`` seconds."""
    if not (math.isfinite(amplitude) and amplitude >= 0):
        raise ParameterError("amplitude must be >= 0")
    _check_positive("freq", freq)
    n = _n_samples(ts, duration)
    k = np.arange(n)
    return TimeSeries(offset + amplitude * np.sin(2.0 * np.pi * freq * k * ts), ts)


def gen_staircase(amplitude: float, offset: float, period: float, ts: float, duration: float) -> TimeSeries:
    """Square wave around ``offset`` with a neutral onset.

    The signal holds ``offset`` for the first half period, then alternates
    between ``offset + amplitude`` and ``offset - amplitude``, each held for
    half a period, starting high.
    """
    if not (math.isfinite(amplitude) and amplitude >= 0):
        raise ParameterError("amplitude must be >= 0")
    _check_positive("period", period)
    n = _n_samples(ts, duration)
    half = period / 2.0
    # integer half-period index; tiny bias keeps exact boundaries on the later level
    idx = np.floor(np.arange(n) * ts / half + 1e-9).astype(np.int64)
    values = np.where(idx % 2 == 1, offset + amplitude, offset - amplitude)
    values = np.where(idx == 0, offset, values)
    return TimeSeries(values.astype(float), ts)


def window_mask(series: TimeSeries, t_start: float, t_end: float) -> np.ndarray:
    """Boolean mask of samples with ``t_start <= t <= t_end`` (both inclusive)."""
    if not (t_start < t_end):
        raise ParameterError("window needs t_start < t_end")
    t = series.t
    tol = 1e-9 * series.ts
    if t_start < t[0] - tol or t_end > t[-1] + tol:
        raise ParameterError(
            f"window [{t_start}, {t_end}] outside series extent [{t[0]}, {t[-1]}]")
    return (t >= t_start - tol) & (t <= t_end + tol)


def mae(errors: TimeSeries, window: tuple[float, float] | None = None) -> float:
    """Mean absolute error over an inclusive time window (default: whole series)."""
    if window is None:
        vals = errors.values
    else:
        vals = errors.values[window_mask(errors, *window)]
    if vals.size == 0:
        raise ParameterError("empty MAE window")
    return float(np.mean(np.abs(vals)))


def step_direction(r: np.ndarray) -> np.ndarray:
    """Sign of the most recent nonzero change of ``r`` at or before each sample."""
    r = np.asarray(r, dtype=float)
    d = np.zeros(r.size)
    d[1:] = np.sign(np.diff(r))
    idx = np.where(d != 0, np.arange(r.size), 0)
    np.maximum.accumulate(idx, out=idx)
    return d[idx]


def overshoot(y: TimeSeries, r: TimeSeries) -> float:
    """Largest excursion of ``y`` beyond ``r`` in the direction ``r`` last moved."""
    if len(y) != len(r) or not math.isclose(y.ts, r.ts, rel_tol=1e-12):
        raise ParameterError("overshoot needs equal length and sampling time")
    direction = step_direction(r.values)
    excess = (y.values - r.values) * direction
    return float(max(0.0, excess.max()))
