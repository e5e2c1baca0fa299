"""Pure-Python closed-loop kernel (fallback for the compiled one)."""

from __future__ import annotations

import math

import numpy as np

from afmpc import mpc
from afmpc.afrit import RegressorFilter, build_regressor, df_rls_update, make_df_rls
from afmpc.errors import AfmpcError
from afmpc.pid import PidGains, PidState, admissible, pid_step
from afmpc.plant import PlantParams, plant_output, plant_reset, plant_step
from afmpc.plmodel import PlModel

N_COLS = 13


def simulate(mode, r, noise, ts, plant_vec, y0, gains0, tc, rls_vec, mpc_vec,
             valve_lo, valve_hi):
    r = np.asarray(r, dtype=float)
    noise = np.asarray(noise, dtype=float)
    n = noise.size
    params = PlantParams(*[float(v) for v in plant_vec])
    hp, hu = int(mpc_vec[0]), int(mpc_vec[1])
    cfg = mpc.MpcConfig(hp, hu, *[float(v) for v in mpc_vec[2:7]])
    gm = PlModel(float(tc), float(ts))
    adaptive = mode in (1, 3)
    guard = len(rls_vec) > 4 and bool(rls_vec[4])
    use_mpc = mode in (2, 3)

    out = np.full((n, N_COLS), np.nan)
    state = plant_reset(params, y0)
    y = plant_output(state, params, noise[0])
    gains = PidGains(*[float(g) for g in gains0])
    pid = PidState()
    rls = make_df_rls(gains.as_array(), mu=rls_vec[0], eps=rls_vec[1],
                      p0_scale=rls_vec[2], r0_scale=rls_vec[3])
    rfilt = RegressorFilter()
    u_prev_applied = 0.0
    u_c_prev = float(y0)
    u_prev = state.u_prev
    x_pl = float(y0)
    a_pl, b_pl = gm.a_p, gm.b_p

    held = False
    for k in range(n):
        try:
            if adaptive:
                rfilt, sample = build_regressor(rfilt, y, u_prev_applied, gm)
                rls = df_rls_update(rls, sample)
                cand = PidGains.from_array(rls.theta_hat)
                held = guard and not admissible(cand, ts)
                if not held:
                    gains = cand
            j_mpc = 0.0
            active = 0
            if use_mpc:
                sol = mpc.solve(cfg, gm, y, mpc.extend_preview(r, k, hp), gains, pid,
                                u_c_prev, u_prev)
                u_c = float(sol.u_c_plan[0])
                j_mpc = sol.j
                active = 1 if sol.active_constraints > 0 else 0
            else:
                u_c = float(r[k])
            pid, u = pid_step(gains, pid, u_c - y, ts)
            if not math.isfinite(u):
                raise AfmpcError(f"non-finite control input at step {k}")
        except (AfmpcError, np.linalg.LinAlgError, ValueError, OverflowError):
            return out, k
        if u < cfg.u_min - 1e-9 or u > cfg.u_max + 1e-9:
            active = 2
        u_applied = min(max(u, valve_lo), valve_hi)
        match_err = x_pl - y
        out[k] = (k * ts, r[k], y, u_applied, u_c, gains.kp, gains.ki, gains.kd,
                  match_err, j_mpc, active, u, float(held))

        x_pl = a_pl * x_pl + b_pl * u_c
        u_c_prev = u_c
        u_prev = u
        u_prev_applied = u_applied
        if k + 1 < n:
            state, _ = plant_step(state, params, u_applied, ts)
            y = plant_output(state, params, noise[k + 1])
    return out, -1
