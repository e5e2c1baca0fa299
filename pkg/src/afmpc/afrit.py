"""Online model matching: regressor filters and directional-forgetting RLS.

With ``phi(k) = beta(z)(1 - G_m) y(k)`` and ``d(k) = G_m u(k)``, the gains
that make the closed loop behave like ``G_m`` solve the linear regression
``d = phi^T theta``. The estimator below fits it recursively, forgetting
information only along the current regressor direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from afmpc.errors import NumericalDegeneracyError, ParameterError
from afmpc.pid import pid_regressor_batch
from afmpc.plmodel import PlModel, pl_filter_array


@dataclass(frozen=True)
class DfRlsState:
    theta_hat: np.ndarray
    p_mat: np.ndarray
    r_mat: np.ndarray
    mu: float = 0.99
    eps: float = 1e-3


def make_df_rls(theta0, mu: float = 0.99, eps: float = 1e-3,
                p0_scale: float = 1e3, r0_scale: float | None = None) -> DfRlsState:
    """Estimator state with ``P(0) = p0_scale I`` and ``R(0) = r0_scale I``.

    ``r0_scale`` defaults to ``1 / p0_scale`` so that ``P R = I`` from the start.
    """
    if not 0 < mu <= 1:
        raise ParameterError("mu must lie in (0, 1]")
    if not eps >= 0:
        raise ParameterError("eps must be >= 0")
    if not p0_scale > 0:
        raise ParameterError("p0_scale must be > 0")
    r0_scale = 1.0 / p0_scale if r0_scale is None else r0_scale
    if not r0_scale > 0:
        raise ParameterError("r0_scale must be > 0")
    theta = np.asarray(theta0, dtype=float).copy()
    n = theta.size
    return DfRlsState(theta, p0_scale * np.eye(n), r0_scale * np.eye(n), float(mu), float(eps))


def df_rls_update(state: DfRlsState, sample: "RegressorSample") -> DfRlsState:
    """One directional-forgetting RLS step.

    Inside the deadzone (``|phi| <= eps``) nothing changes. The covariance
    correction uses ``1 + phi^T Pbar phi`` so that ``P`` stays the inverse of
    ``R``.
    """
    phi = np.asarray(sample.phi, dtype=float)
    d = float(sample.d)
    if math.sqrt(float(phi @ phi)) <= state.eps:
        return state
    P, R, mu = state.p_mat, state.r_mat, state.mu
    r_phi = R @ phi
    s = float(phi @ r_phi)
    if not s > 0:
        raise NumericalDegeneracyError(f"phi^T R phi = {s} with |phi| > eps")
    outer = np.outer(phi, phi)
    P_bar = P + ((1.0 - mu) / mu / s) * outer
    # (I - M) R with M = (1 - mu) R phi phi^T / s
    R_new = R - ((1.0 - mu) / s) * np.outer(r_phi, phi @ R) + outer
    pb_phi = P_bar @ phi
    P_new = P_bar - np.outer(pb_phi, pb_phi) / (1.0 + float(phi @ pb_phi))
    R_new = 0.5 * (R_new + R_new.T)
    P_new = 0.5 * (P_new + P_new.T)
    theta = state.theta_hat + P_new @ phi * (d - float(phi @ state.theta_hat))
    return DfRlsState(theta, P_new, R_new, mu, state.eps)


@dataclass(frozen=True)
class RegressorSample:
    phi: np.ndarray
    d: float


@dataclass(frozen=True)
class RegressorFilter:
    """Filter memories for streaming regressor construction (all start at zero)."""

    x_y: float = 0.0
    x_u: float = 0.0
    w_prev: float = 0.0
    w_integ: float = 0.0


def build_regressor(fstate: RegressorFilter, y_k: float, u_prev: float,
                    gm: PlModel) -> tuple[RegressorFilter, RegressorSample]:
    """Regressor at sample ``k`` from ``y(k)`` and the previously applied input.

    ``G_m`` has a one-sample delay, so ``d(k) = G_m u(k)`` depends on inputs
    up to ``k-1`` only; ``u_prev`` is ``u(k-1)`` (0 at the first sample).
    """
    a, b, ts = gm.a_p, gm.b_p, gm.ts
    x_u = a * fstate.x_u + b * u_prev
    w = y_k - fstate.x_y
    x_y = a * fstate.x_y + b * y_k
    integ = fstate.w_integ + ts * w
    phi = np.array([w, integ, (w - fstate.w_prev) / ts])
    return RegressorFilter(x_y, x_u, w, integ), RegressorSample(phi, x_u)


def regressor_batch(y: np.ndarray, u: np.ndarray, tc: float, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Whole-signal regressors: ``(Phi (N, 3), d (N,))``."""
    y = np.asarray(y, dtype=float)
    w = y - pl_filter_array(tc, ts, y)
    return pid_regressor_batch(w, ts), pl_filter_array(tc, ts, u)


def pe_check(phis, delta: int, alpha0: float) -> bool:
    """True iff every window ``sum_{k=s}^{s+delta} phi phi^T`` has min eigenvalue >= alpha0."""
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    if delta < 1:
        raise ParameterError("delta must be >= 1")
    if phis.shape[0] <= delta:
        raise ParameterError("need more than delta regressors")
    if not alpha0 > 0:
        raise ParameterError("alpha0 must be > 0")
    windows = np.lib.stride_tricks.sliding_window_view(phis, delta + 1, axis=0)
    grams = np.einsum("wik,wjk->wij", windows, windows)
    return bool(np.all(np.linalg.eigvalsh(grams)[:, 0] >= alpha0))


def min_eig(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat)[0])


def duality_error(state: DfRlsState) -> float:
    return float(np.max(np.abs(state.p_mat @ state.r_mat - np.eye(state.p_mat.shape[0]))))
