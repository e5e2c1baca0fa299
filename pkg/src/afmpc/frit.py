"""Offline controller tuning from a single closed-loop data set.

The fictitious reference ``r~ = C^-1(theta) u0 + y0`` is the reference that
would have produced the logged input under candidate gains. E-FRIT scores a
candidate by how well the PL model driven by ``r~`` reproduces ``y0``, plus a
penalty on increments of the fictitious input, and tunes the PID gains
jointly with the PL time constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from afmpc.errors import (BadStartError, DegenerateControllerError, OptimizationError,
                          ParameterError)
from afmpc.pid import PidGains, controller_polynomials
from afmpc.plmodel import pl_filter_array
from afmpc.signals import TimeSeries


@dataclass(frozen=True)
class ExtendedGains:
    gains: PidGains
    tc: float

    def __post_init__(self):
        if not (math.isfinite(self.tc) and self.tc > 0):
            raise ParameterError("tc must be finite and > 0")

    def as_vector(self) -> np.ndarray:
        return np.array([self.gains.kp, self.gains.ki, self.gains.kd, self.tc])


@dataclass(frozen=True)
class PriorData:
    u0: TimeSeries
    y0: TimeSeries

    def __post_init__(self):
        if len(self.u0) != len(self.y0):
            raise ParameterError("u0 and y0 must have equal length")
        if len(self.u0) < 10:
            raise ParameterError("prior data needs at least 10 samples")
        if not math.isclose(self.u0.ts, self.y0.ts, rel_tol=1e-12):
            raise ParameterError("u0 and y0 must share the sampling time")

    @property
    def ts(self) -> float:
        return self.u0.ts


@dataclass(frozen=True)
class TuneOptions:
    tol: float = 1e-8
    max_iters: int = 5000
    restart: bool = True
    # False keeps the PL time constant at its starting value (plain FRIT)
    tune_tc: bool = True


@dataclass(frozen=True)
class TuneReport:
    theta_star: ExtendedGains
    j_value: float
    j_tracking: float
    j_input: float
    iterations: int
    converged: bool
    lam: float = field(default=0.0)


def _check_invertible(gains: PidGains, ts: float) -> np.ndarray:
    num, den = controller_polynomials(gains, ts)
    scale = abs(gains.kp) + abs(gains.ki) * ts + abs(gains.kd) / ts
    if scale == 0.0 or abs(num[0]) <= 1e-14 * scale:
        raise DegenerateControllerError(
            f"C(z) has zero leading coefficient for gains {gains}")
    return num


def fictitious_reference_array(gains: PidGains, u0: np.ndarray, y0: np.ndarray,
                               ts: float) -> np.ndarray:
    num = _check_invertible(gains, ts)
    return lfilter([1.0, -1.0], num, u0) + y0


def fictitious_reference(gains: PidGains, data: PriorData) -> TimeSeries:
    r = fictitious_reference_array(gains, data.u0.values, data.y0.values, data.ts)
    if not np.all(np.isfinite(r)):
        raise DegenerateControllerError("fictitious reference diverged")
    return data.u0.with_values(r)


def _objective_parts(kp: float, ki: float, kd: float, tc: float,
                     u0: np.ndarray, y0: np.ndarray, ts: float) -> tuple[float, float]:
    gains = PidGains(kp, ki, kd)
    r_fict = fictitious_reference_array(gains, u0, y0, ts)
    y_fict = pl_filter_array(tc, ts, r_fict)
    num, den = controller_polynomials(gains, ts)
    u_fict = lfilter(num, den, r_fict - y_fict)
    j_tracking = float(np.sum((y0 - y_fict) ** 2))
    j_input = float(np.sum(np.diff(u_fict) ** 2))
    return j_tracking, j_input


def efrit_objective(theta: ExtendedGains, data: PriorData, lam: float) -> tuple[float, float, float]:
    """Return ``(j, j_tracking, j_input)`` with ``j = j_tracking + lam * j_input``."""
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError("lambda must be >= 0")
    g = theta.gains
    with np.errstate(over="ignore", invalid="ignore"):
        jt, ji = _objective_parts(g.kp, g.ki, g.kd, theta.tc,
                                  data.u0.values, data.y0.values, data.ts)
    return jt + lam * ji, jt, ji


def tune(theta0: ExtendedGains, data: PriorData, lam: float,
         opts: TuneOptions | None = None) -> TuneReport:
    """Minimise the E-FRIT objective over ``[kp, ki, kd, log(tc)]``.

    Nelder-Mead runs until the simplex shrinks below ``opts.tol`` or
    ``opts.max_iters`` is used up, then restarts once from the best point.
    With ``opts.tune_tc`` off only the PID gains move.
    """
    opts = opts or TuneOptions()
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError("lambda must be >= 0")
    u0, y0, ts = data.u0.values, data.y0.values, data.ts
    n_fail = 0
    n_eval = 0

    log_tc0 = math.log(theta0.tc)

    def fun(p):
        nonlocal n_fail, n_eval
        n_eval += 1
        tc = math.exp(p[3] if opts.tune_tc else log_tc0)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                jt, ji = _objective_parts(p[0], p[1], p[2], tc, u0, y0, ts)
        except (DegenerateControllerError, ParameterError, OverflowError):
            n_fail += 1
            return math.inf
        j = jt + lam * ji
        if not math.isfinite(j):
            n_fail += 1
            return math.inf
        return j

    g0 = theta0.gains
    x0 = np.array([g0.kp, g0.ki, g0.kd, log_tc0] if opts.tune_tc else [g0.kp, g0.ki, g0.kd])
    if not math.isfinite(fun(x0)):
        raise BadStartError(f"E-FRIT objective is not finite at {theta0}")

    nm_opts = {"xatol": opts.tol, "fatol": math.inf, "maxiter": opts.max_iters,
               "maxfev": 4 * opts.max_iters}
    res = minimize(fun, x0, method="Nelder-Mead", options=nm_opts)
    iterations = int(res.nit)
    converged = bool(res.success)
    if opts.restart:
        res2 = minimize(fun, res.x, method="Nelder-Mead", options=nm_opts)
        iterations += int(res2.nit)
        converged = bool(res2.success)
        if res2.fun <= res.fun:
            res = res2
    if n_fail == n_eval or not math.isfinite(res.fun):
        raise OptimizationError("every simplex evaluation failed")

    tc = math.exp(res.x[3]) if opts.tune_tc else theta0.tc
    best = ExtendedGains(PidGains.from_array(res.x[:3]), tc)
    j, jt, ji = efrit_objective(best, data, lam)
    return TuneReport(best, j, jt, ji, iterations, converged, lam)
