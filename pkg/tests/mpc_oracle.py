"""Independent MPC oracles built only from the public prediction functions."""

import itertools

import numpy as np

from afmpc.mpc import MpcConfig, predict_inputs, predict_outputs
from afmpc.pid import PidGains, PidState
from afmpc.plmodel import make_pl


def random_instance(rng, max_hu=3):
    ts = float(rng.choice([1e-3, 1e-2]))
    hp = int(rng.integers(1, 6))
    hu = int(rng.integers(1, min(max_hu, hp) + 1))
    cfg = MpcConfig(hp, hu, q=float(rng.uniform(0.1, 2)), r_w=float(rng.uniform(0.1, 50)),
                    ru_w=float(rng.uniform(0, 2)), u_min=0.0, u_max=10.0)
    model = make_pl(float(rng.uniform(0.02, 0.3)), ts)
    gains = PidGains(float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.1, 5.0)),
                     float(rng.uniform(0, 0.02)) * ts * 10)
    x0 = float(rng.uniform(0, 60))
    inst = dict(cfg=cfg, model=model, x0=x0, r_preview=rng.uniform(0, 60, hp), gains=gains,
                pid_state=PidState(float(rng.uniform(-2, 12)), float(rng.uniform(-5, 5))),
                u_c_prev=x0 + float(rng.normal(0, 5)), u_prev=float(rng.uniform(0, 10)))
    return inst


def affine_maps(inst):
    """``(G, F, U, u0)`` with ``y_hat = G v + F`` and ``u_hat = U v + u0``."""
    cfg, model, x0 = inst["cfg"], inst["model"], inst["x0"]
    hu, hp = cfg.hu, cfg.hp

    def yh(v):
        return predict_outputs(model, x0, v, hp)

    def uh(v):
        y = yh(v)
        y_now = np.concatenate([[x0], y[:hu - 1]])
        return predict_inputs(inst["gains"], inst["pid_state"], v, y_now, model.ts)

    zero = np.zeros(hu)
    F, u0 = yh(zero), uh(zero)
    eye = np.eye(hu)
    G = np.column_stack([yh(eye[j]) - F for j in range(hu)])
    U = np.column_stack([uh(eye[j]) - u0 for j in range(hu)])
    return G, F, U, u0


def quadratic(inst):
    """Objective as ``0.5 v'Hv + f'v + c`` assembled from the affine maps."""
    cfg = inst["cfg"]
    G, F, U, u0 = affine_maps(inst)
    hu = cfg.hu
    D = np.eye(hu) - np.eye(hu, k=-1)
    c1 = np.zeros(hu)
    c1[0] = inst["u_c_prev"]
    c2 = D @ u0
    c2[0] -= inst["u_prev"]
    res = F - np.asarray(inst["r_preview"])
    DU = D @ U
    H = 2 * (cfg.q * G.T @ G + cfg.r_w * D.T @ D + cfg.ru_w * DU.T @ DU)
    f = 2 * (cfg.q * G.T @ res - cfg.r_w * D.T @ c1 + cfg.ru_w * DU.T @ c2)
    c = cfg.q * res @ res + cfg.r_w * c1 @ c1 + cfg.ru_w * c2 @ c2
    return H, f, c, U, u0


def least_squares_plan(inst):
    """Unconstrained optimum from the stacked normal equations."""
    cfg = inst["cfg"]
    G, F, U, u0 = affine_maps(inst)
    hu = cfg.hu
    D = np.eye(hu) - np.eye(hu, k=-1)
    c1 = np.zeros(hu)
    c1[0] = inst["u_c_prev"]
    c2 = D @ u0
    c2[0] -= inst["u_prev"]
    A = np.vstack([np.sqrt(cfg.q) * G, np.sqrt(cfg.r_w) * D, np.sqrt(cfg.ru_w) * D @ U])
    b = np.concatenate([np.sqrt(cfg.q) * (np.asarray(inst["r_preview"]) - F),
                        np.sqrt(cfg.r_w) * c1, -np.sqrt(cfg.ru_w) * c2])
    return np.linalg.solve(A.T @ A, A.T @ b)


GRID_POINTS = {1: 2001, 2: 201, 3: 41}


def grid_search(inst):
    """Best objective over an even grid of the feasible set in input space.

    Returns ``(j_best, bound)``: ``bound`` limits how far above the true
    optimum ``j_best`` can lie given the grid spacing.
    """
    cfg = inst["cfg"]
    H, f, c, U, u0 = quadratic(inst)
    n = cfg.hu
    pts = GRID_POINTS[n]
    axis = np.linspace(cfg.u_min, cfg.u_max, pts)
    W = np.array(list(itertools.product(axis, repeat=n)))
    V = np.linalg.solve(U, (W - u0).T).T
    J = 0.5 * np.einsum("ij,jk,ik->i", V, H, V) + V @ f + c
    k = int(np.argmin(J))
    Ui = np.linalg.inv(U)
    Hw = Ui.T @ H @ Ui
    h = (cfg.u_max - cfg.u_min) / (pts - 1)
    delta = 0.5 * h * np.sqrt(n)
    return float(J[k]), Hw, Ui, f, u0, delta


def resolution_bound(inst, v_star, Hw, Ui, f, delta):
    H, _, _, _, _ = quadratic(inst)
    grad_w = Ui.T @ (H @ v_star + f)
    lmax = float(np.linalg.eigvalsh(0.5 * (Hw + Hw.T)).max())
    return float(np.linalg.norm(grad_w)) * delta + 0.5 * lmax * delta ** 2
