"""Surrogate hysteretic actuator.

A first-order lag driven by ``gain * u + z``, where ``z`` is an asymmetric
Bouc-Wen style hysteresis variable excited by input increments. Stands in for
the water-hydraulic muscle so closed-loop behaviour can be exercised offline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from afmpc.errors import ParameterError, PlantStateError


@dataclass(frozen=True)
class PlantParams:
    k_lag: float = 0.15
    gain: float = 5.0
    bw_A: float = 1.0
    bw_beta: float = 0.4
    bw_gamma: float = 0.4
    bw_n: float = 1.0
    asym: float = 0.3
    sat_lo: float = 0.0
    sat_hi: float = 60.0
    noise_std: float = 0.01

    def __post_init__(self):
        for name in ("k_lag", "gain", "bw_A", "bw_beta", "bw_gamma", "bw_n",
                     "asym", "sat_lo", "sat_hi", "noise_std"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"plant.{name} must be finite")
        if self.k_lag <= 0:
            raise ParameterError("plant.k_lag must be > 0")
        if self.gain == 0:
            raise ParameterError("plant.gain must be nonzero")
        # zero is allowed so the hysteresis can be switched off entirely
        if self.bw_beta + self.bw_gamma < 0:
            raise ParameterError("plant.bw_beta + plant.bw_gamma must be >= 0")
        if self.bw_n < 1:
            raise ParameterError("plant.bw_n must be >= 1")
        if not 0 <= self.asym < 1:
            raise ParameterError("plant.asym must lie in [0, 1)")
        if not self.sat_lo < self.sat_hi:
            raise ParameterError("plant.sat_lo must be < plant.sat_hi")
        if self.noise_std < 0:
            raise ParameterError("plant.noise_std must be >= 0")

    def as_vector(self) -> np.ndarray:
        """Packed layout shared with the compiled kernel."""
        return np.array([self.k_lag, self.gain, self.bw_A, self.bw_beta, self.bw_gamma,
                         self.bw_n, self.asym, self.sat_lo, self.sat_hi, self.noise_std])


@dataclass
class PlantState:
    x_lag: float
    z: float = 0.0
    u_prev: float = 0.0
    poisoned: bool = field(default=False, compare=False)


def plant_reset(params: PlantParams, y0: float) -> PlantState:
    """Equilibrium state whose noiseless output is ``y0`` with no hysteresis memory."""
    if not (math.isfinite(y0) and params.sat_lo <= y0 <= params.sat_hi):
        raise ParameterError(f"y0={y0} outside [{params.sat_lo}, {params.sat_hi}]")
    return PlantState(x_lag=float(y0), z=0.0, u_prev=float(y0) / params.gain)


def plant_output(state: PlantState, params: PlantParams, noise: float = 0.0) -> float:
    return min(max(state.x_lag, params.sat_lo), params.sat_hi) + noise


# largest input increment taken by one explicit hysteresis update
HYST_MAX_DU = 0.05


def hysteresis_update(z: float, du: float, params: PlantParams) -> float:
    """Advance the hysteresis variable over an input change ``du``.

    The explicit update is unstable once ``(beta + gamma) |du|`` nears 2, so
    large jumps are split into equal increments of at most ``HYST_MAX_DU``.
    Small increments take exactly one step.
    """
    n_sub = max(1, math.ceil(abs(du) / HYST_MAX_DU))
    h = du / n_sub
    scale = 1.0 + params.asym * (float(h > 0) - float(h < 0))
    for _ in range(n_sub):
        dz = (params.bw_A * h
              - params.bw_beta * abs(h) * abs(z) ** (params.bw_n - 1.0) * z
              - params.bw_gamma * h * abs(z) ** params.bw_n)
        z = z + scale * dz
    return z


def plant_step(state: PlantState, params: PlantParams, u: float, ts: float,
               rng: np.random.Generator | None = None) -> tuple[PlantState, float]:
    """Apply ``u`` for one sample and return the new state and measured output.

    The returned output is the displacement at the next sampling instant.
    Measurement noise is drawn from ``rng``; ``rng=None`` measures noiselessly.
    """
    if state.poisoned:
        raise PlantStateError("plant state is poisoned; call plant_reset")
    if not (ts > 0 and math.isfinite(ts)):
        raise ParameterError("ts must be finite and > 0")
    u = float(u)
    if not math.isfinite(u):
        state.poisoned = True
        raise PlantStateError(f"non-finite plant input {u!r}")
    z = hysteresis_update(state.z, u - state.u_prev, params)
    a = math.exp(-ts / params.k_lag)
    x = a * state.x_lag + (1.0 - a) * (params.gain * u + z)
    new = PlantState(x_lag=x, z=z, u_prev=float(u))
    noise = 0.0
    if rng is not None and params.noise_std > 0:
        noise = params.noise_std * float(rng.standard_normal())
    return new, plant_output(new, params, noise)
