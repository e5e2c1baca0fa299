"""Outer-loop MPC over the PL predictor with PID-aware input prediction.

The decision variable is the virtual reference plan ``u_c(k..k+hu-1)``,
held constant beyond the control horizon. Predicted outputs and predicted
PID inputs are both affine in the plan, so each step is a small strictly
convex QP with box constraints on the predicted inputs, solved here by a
primal active-set method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from afmpc.errors import ParameterError
from afmpc.pid import PidGains, PidState
from afmpc.plmodel import PlModel


@dataclass(frozen=True)
class MpcConfig:
    hp: int = 5
    hu: int = 5
    q: float = 1.0
    r_w: float = 40.0
    ru_w: float = 1.0
    u_min: float = 0.0
    u_max: float = 10.0

    def __post_init__(self):
        if not (int(self.hp) == self.hp and self.hp >= 1):
            raise ParameterError("mpc.hp must be an integer >= 1")
        if not (int(self.hu) == self.hu and 1 <= self.hu <= self.hp):
            raise ParameterError("mpc.hu must be an integer in [1, hp]")
        if not self.q >= 0:
            raise ParameterError("mpc.q must be >= 0")
        if not self.r_w > 0:
            raise ParameterError("mpc.r_w must be > 0")
        if not self.ru_w >= 0:
            raise ParameterError("mpc.ru_w must be >= 0")
        if not self.u_min < self.u_max:
            raise ParameterError("mpc.u_min must be < mpc.u_max")


@dataclass(frozen=True)
class MpcSolution:
    u_c_plan: np.ndarray
    u_hat_plan: np.ndarray
    j: float
    active_constraints: int
    iterations: int
    feasible: bool = True


def predict_outputs(model: PlModel, x0: float, u_c_plan, hp: int) -> np.ndarray:
    """``y_hat(k+1..k+hp | k)`` from state ``x0``, holding the last planned move."""
    plan = np.asarray(u_c_plan, dtype=float)
    if plan.size > hp:
        raise ParameterError("plan longer than prediction horizon")
    a, b = model.a_p, model.b_p
    x = float(x0)
    out = np.empty(hp)
    for i in range(hp):
        x = a * x + b * plan[min(i, plan.size - 1)]
        out[i] = model.c_p * x
    return out


def predict_inputs(gains: PidGains, pid_state: PidState, u_c_plan, y_hat, ts: float) -> np.ndarray:
    """Predicted PID output ``u_hat(k+i)``, ``i = 0..hu-1``, with gains frozen.

    ``y_hat[i]`` is the predicted output at ``k+i``; ``y_hat[0]`` is the
    current one.
    """
    plan = np.asarray(u_c_plan, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.size < plan.size:
        raise ParameterError("need one output prediction per planned move")
    out = np.empty(plan.size)
    u_i = pid_state.integ
    e_prev = pid_state.e_prev
    for i in range(plan.size):
        e = plan[i] - y_hat[i]
        u_i = u_i + gains.ki * ts * e
        out[i] = gains.kp * e + u_i + gains.kd * (e - e_prev) / ts
        e_prev = e
    return out


def mpc_objective(cfg: MpcConfig, u_c_plan, u_c_prev: float, u_hat_plan, u_prev: float,
                  y_hat, r_preview) -> float:
    """Tracking + virtual-reference increment + input increment cost.

    ``y_hat`` and ``r_preview`` are aligned to ``k+1..k+hp``.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    r_preview = np.asarray(r_preview, dtype=float)
    d_uc = np.diff(np.asarray(u_c_plan, dtype=float), prepend=u_c_prev)
    d_u = np.diff(np.asarray(u_hat_plan, dtype=float), prepend=u_prev)
    j_e = cfg.q * float(np.sum((y_hat[:cfg.hp] - r_preview[:cfg.hp]) ** 2))
    return j_e + cfg.r_w * float(np.sum(d_uc ** 2)) + cfg.ru_w * float(np.sum(d_u ** 2))


@dataclass(frozen=True)
class CondensedQp:
    """``J(v) = 0.5 v'Hv + f'v + const`` with ``u_hat = U v + u0``."""

    H: np.ndarray
    f: np.ndarray
    const: float
    U: np.ndarray
    u0: np.ndarray
    G: np.ndarray
    F: np.ndarray


def condense(cfg: MpcConfig, model: PlModel, x0: float, r_preview, gains: PidGains,
             pid_state: PidState, u_c_prev: float, u_prev: float) -> CondensedQp:
    hp, hu, ts = cfg.hp, cfg.hu, model.ts
    a, b = model.a_p, model.b_p
    r = np.asarray(r_preview, dtype=float)[:hp]
    if r.size < hp:
        raise ParameterError("r_preview shorter than hp")

    G = np.zeros((hp, hu))
    F = np.empty(hp)
    row = np.zeros(hu)
    fx = float(x0)
    for i in range(hp):
        row = a * row
        row[min(i, hu - 1)] += b
        fx = a * fx
        G[i] = row
        F[i] = fx

    # output prediction aligned with the moves: index 0 is the current output
    G_in = np.zeros((hu, hu))
    F_in = np.empty(hu)
    F_in[0] = x0
    if hu > 1:
        G_in[1:] = G[:hu - 1]
        F_in[1:] = F[:hu - 1]
    E = np.eye(hu) - G_in
    e_c = -F_in

    L = np.tril(np.ones((hu, hu)))
    D = np.eye(hu) - np.eye(hu, k=-1)
    kd_ts = gains.kd / ts
    U = gains.kp * E + gains.ki * ts * (L @ E) + kd_ts * (D @ E)
    first = np.zeros(hu)
    first[0] = 1.0
    u0 = (gains.kp * e_c + pid_state.integ + gains.ki * ts * (L @ e_c)
          + kd_ts * (D @ e_c - pid_state.e_prev * first))

    DU = D @ U
    c1 = u_c_prev * first
    c2 = D @ u0 - u_prev * first
    res = F - r
    H = 2.0 * (cfg.q * G.T @ G + cfg.r_w * D.T @ D + cfg.ru_w * DU.T @ DU)
    f = 2.0 * (cfg.q * G.T @ res - cfg.r_w * D.T @ c1 + cfg.ru_w * DU.T @ c2)
    const = cfg.q * float(res @ res) + cfg.r_w * float(c1 @ c1) + cfg.ru_w * float(c2 @ c2)
    return CondensedQp(0.5 * (H + H.T), f, const, U, u0, G, F)


def solve_box_qp(H: np.ndarray, f: np.ndarray, U: np.ndarray, u0: np.ndarray,
                 lo: float, hi: float, max_iter: int = 200) -> tuple[np.ndarray, int, int, bool]:
    """Minimise ``0.5 v'Hv + f'v`` subject to ``lo <= U v + u0 <= hi``.

    ``U`` is lower triangular. Returns ``(v, n_active, iterations, feasible)``.
    Primal active set, started from the unconstrained optimum clipped into
    the box in input space.
    """
    n = f.size
    v = np.linalg.solve(H, -f)
    w = U @ v + u0
    ftol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.all(w >= lo - ftol) and np.all(w <= hi + ftol):
        return v, 0, 1, True

    A = np.vstack([U, -U])
    bvec = np.concatenate([lo - u0, u0 - hi])
    w0 = np.clip(w, lo, hi)
    diag = np.abs(np.diag(U))
    if diag.min() <= 1e-12 * max(1.0, diag.max()):
        # U singular: the box may be unreachable; least-squares projection
        v = np.linalg.lstsq(U, w0 - u0, rcond=None)[0]
        wv = U @ v + u0
        if np.any(wv < lo - 1e-9) or np.any(wv > hi + 1e-9):
            return v, 0, 0, False
        work = []
    else:
        v = solve_triangular(U, w0 - u0, lower=True)
        work = [j for j in range(n) if w[j] < lo] + [n + j for j in range(n) if w[j] > hi]

    for it in range(1, max_iter + 1):
        g = H @ v + f
        m = len(work)
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        if m:
            Aw = A[work]
            K[:n, n:] = -Aw.T
            K[n:, :n] = Aw
        rhs = np.concatenate([-g, np.zeros(m)])
        sol = np.linalg.solve(K, rhs)
        p, lam = sol[:n], sol[n:]
        # a full working set of independent rows pins v to a vertex
        if m == n or np.max(np.abs(p)) <= 1e-12 * max(1.0, np.max(np.abs(v))):
            if m == 0:
                return v, 0, it, True
            jmin = int(np.argmin(lam))
            if lam[jmin] >= -1e-12 * max(1.0, np.max(np.abs(g))):
                return v, m, it, True
            work.pop(jmin)
            continue
        alpha = 1.0
        blocking = -1
        for j in range(2 * n):
            # the mirror of a working row is parallel to it; never add both
            if j in work or (j + n if j < n else j - n) in work:
                continue
            ap = float(A[j] @ p)
            if ap < -1e-14:
                step = (bvec[j] - float(A[j] @ v)) / ap
                if step < alpha:
                    alpha = max(step, 0.0)
                    blocking = j
        v = v + alpha * p
        if blocking >= 0:
            work.append(blocking)
    return v, len(work), max_iter, True


def solve(cfg: MpcConfig, model: PlModel, x0: float, r_preview, gains: PidGains,
          pid_state: PidState, u_c_prev: float, u_prev: float) -> MpcSolution:
    """Receding-horizon step; apply ``u_c_plan[0]``."""
    vals = (x0, u_c_prev, u_prev, gains.kp, gains.ki, gains.kd, pid_state.integ, pid_state.e_prev)
    if not all(math.isfinite(v) for v in vals) or not np.all(np.isfinite(r_preview)):
        raise ParameterError("non-finite MPC input")
    qp = condense(cfg, model, x0, r_preview, gains, pid_state, u_c_prev, u_prev)
    v, n_active, iters, feasible = solve_box_qp(qp.H, qp.f, qp.U, qp.u0, cfg.u_min, cfg.u_max)
    u_hat = qp.U @ v + qp.u0
    # summed residuals; the condensed quadratic form cancels badly near zero
    j = mpc_objective(cfg, v, u_c_prev, u_hat, u_prev, qp.G @ v + qp.F, r_preview)
    return MpcSolution(v, u_hat, j, n_active, iters, feasible)


def extend_preview(r: np.ndarray, k: int, hp: int) -> np.ndarray:
    """``r(k+1..k+hp)``, repeating the last known value past the end."""
    idx = np.minimum(np.arange(k + 1, k + hp + 1), r.size - 1)
    return r[idx]
