"""Closed-loop simulation kernel and backend selection.

Two implementations share one signature: a compiled Cython kernel
(``afmpc._ckernel``) and a pure-Python fallback (``afmpc._pykernel``) built
from the public module functions. The compiled one is used when importable;
set ``AFMPC_BACKEND=python`` to force the fallback.

``simulate(mode, r, noise, ts, plant_vec, y0, gains0, tc, rls_vec, mpc_vec,
valve_lo, valve_hi) -> (out, failed_step)``

* ``r`` has ``n + hp`` samples (the tail is MPC preview only).
* ``noise`` has ``n`` samples, already scaled by the noise std.
* ``rls_vec`` is ``(mu, eps, p0_scale, r0_scale[, guard])``. With ``guard``
  set, the adaptive modes keep the last estimate whose ``C(z)`` passes
  ``pid.admissible``; the estimator itself is never altered.
* ``u_raw`` is the controller output before the valve clamp; ``held`` is 1
  where the guard kept an earlier estimate.
* ``out`` has shape ``(n, len(COLUMNS))``; rows past ``failed_step`` are NaN
  when a run aborts (``failed_step == -1`` otherwise).
"""

from __future__ import annotations

import os

MODES = {"PID": 0, "AFRIT": 1, "FMPC": 2, "AFMPC": 3}

COLUMNS = ("t", "r", "y", "u_applied", "u_c", "kp_hat", "ki_hat", "kd_hat",
           "match_err", "j_mpc", "active", "u_raw", "held")
TRACE_COLUMNS = COLUMNS[:11]

# values of the ``active`` column
ACTIVE_NONE, ACTIVE_MPC, ACTIVE_VIOLATION = 0, 1, 2


def _python_simulate():
    from afmpc import _pykernel
    return _pykernel.simulate


def _cython_simulate():
    from afmpc import _ckernel
    return _ckernel.simulate


def available_backends() -> list[str]:
    names = ["python"]
    try:
        _cython_simulate()
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_simulate(backend: str | None = None):
    backend = backend or os.environ.get("AFMPC_BACKEND", "auto")
    if backend == "python":
        return _python_simulate()
    if backend == "cython":
        return _cython_simulate()
    try:
        return _cython_simulate()
    except ImportError:
        return _python_simulate()


simulate = get_simulate()
BACKEND = "cython" if simulate.__module__.endswith("_ckernel") else "python"
