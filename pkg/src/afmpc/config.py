"""Experiment configuration and the flat ``key = value`` config format.

A config file is UTF-8 text with one ``key = value`` per line and ``#``
comments. Dotted prefixes select nested settings::

    mode = AFMPC
    lambda = 100
    case = 2
    plant.k_lag = 0.15
    mpc.hp = 5
    rls.mu = 0.99
    control.trajectory = staircase
    pretune.trajectory = sine

Unknown keys are rejected so that a typo never silently falls back to a
default.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from afmpc.errors import ParameterError
from afmpc.mpc import MpcConfig
from afmpc.pid import PidGains
from afmpc.plant import PlantParams
from afmpc.signals import TimeSeries, gen_sine, gen_staircase

MODES = ("PID", "AFRIT", "FMPC", "AFMPC")
TRAJECTORIES = ("sine", "staircase")
CASES = {1: PidGains(0.1, 0.1, 0.01), 2: PidGains(0.1, 0.1, 0.001)}
LAMBDAS = (1.0, 2.5, 5.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0)
PAPER_TS = 1e-4


@dataclass(frozen=True)
class Trajectory:
    """Reference generator settings: 20 mm around 30 mm at 0.3 Hz by default."""

    kind: str = "staircase"
    amplitude: float = 20.0
    offset: float = 30.0
    freq: float = 0.3

    def __post_init__(self):
        if self.kind not in TRAJECTORIES:
            raise ParameterError(f"trajectory must be one of {TRAJECTORIES}, got {self.kind!r}")
        if not (math.isfinite(self.freq) and self.freq > 0):
            raise ParameterError("trajectory.freq must be > 0")

    def generate(self, ts: float, duration: float) -> TimeSeries:
        if self.kind == "sine":
            return gen_sine(self.amplitude, self.offset, self.freq, ts, duration)
        return gen_staircase(self.amplitude, self.offset, 1.0 / self.freq, ts, duration)


@dataclass(frozen=True)
class RlsConfig:
    mu: float = 0.99
    eps: float = 1e-3
    p0_scale: float = 1e3
    r0_scale: float = 1e-3
    # keep the last estimate whose C(z) has stable zeros (see pid.admissible)
    guard: bool = True

    def as_vector(self) -> list[float]:
        return [self.mu, self.eps, self.p0_scale, self.r0_scale, float(self.guard)]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one closed-loop experiment."""

    mode: str = "AFMPC"
    ts: float = 1e-3
    duration: float = 100.0
    trajectory: Trajectory = field(default_factory=Trajectory)
    pretune_trajectory: Trajectory = field(default_factory=Trajectory)
    pretune_duration: float = 20.0
    lam: float = 100.0
    case: int = 1
    theta0: PidGains = CASES[1]
    tc0: float = 0.01
    plant: PlantParams = field(default_factory=PlantParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    rls: RlsConfig = field(default_factory=RlsConfig)
    seed: int = 0
    repeats: int = 1
    y0: float = 0.0
    steady_window: tuple[float, float] = (55.0, 65.0)
    valve: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("ts", "duration", "pretune_duration", "tc0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be finite and > 0")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ParameterError("lambda must be >= 0")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise ParameterError("repeats must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed must be a non-negative integer")
        if self.steady_window[0] >= self.steady_window[1]:
            raise ParameterError("steady window needs start < end")
        if not self.valve[0] < self.valve[1]:
            raise ParameterError("valve range needs lo < hi")

    @property
    def adaptive(self) -> bool:
        return self.mode in ("AFRIT", "AFMPC")

    @property
    def uses_mpc(self) -> bool:
        return self.mode in ("FMPC", "AFMPC")

    def with_case(self, case: int) -> "ExperimentConfig":
        if case not in CASES:
            raise ParameterError(f"case must be one of {sorted(CASES)}")
        return replace(self, case=case, theta0=CASES[case])

    def with_paper_ts(self) -> "ExperimentConfig":
        return replace(self, ts=PAPER_TS)


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _coerce(value: str, like):
    if isinstance(like, bool):
        return _to_bool(value)
    if isinstance(like, int):
        f = float(value)
        if not f.is_integer():
            raise ParameterError(f"expected an integer, got {value!r}")
        return int(f)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _replace_field(obj, name: str, value: str):
    names = {f.name for f in fields(obj)}
    if name not in names:
        raise ParameterError(f"unknown setting {name!r} for {type(obj).__name__}")
    return replace(obj, **{name: _coerce(value, getattr(obj, name))})


_NESTED = {"plant": "plant", "mpc": "mpc", "rls": "rls", "trajectory": "trajectory",
           "control": "trajectory", "pretune": "pretune_trajectory", "theta0": "theta0"}
_TOP = {"mode": "mode", "ts": "ts", "duration": "duration", "lambda": "lam", "seed": "seed",
        "repeats": "repeats", "y0": "y0", "tc0": "tc0"}


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` text into an ordered dict of strings."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ParameterError(f"bad config text: {exc}") from exc
    return dict(parser["config"])


def apply_settings(cfg: ExperimentConfig, settings: dict[str, str]) -> ExperimentConfig:
    """Apply parsed settings in file order; ``case`` resets ``theta0`` to its preset."""
    try:
        return _apply(cfg, settings)
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(str(exc)) from exc


def _apply(cfg: ExperimentConfig, settings: dict[str, str]) -> ExperimentConfig:
    for key, value in settings.items():
        head, _, rest = key.partition(".")
        if not rest:
            if key == "case":
                cfg = cfg.with_case(int(value))
            elif key == "mode":
                cfg = replace(cfg, mode=value.strip().upper())
            elif key in ("trajectory", "control", "pretune"):
                attr = _NESTED[key]
                cfg = replace(cfg, **{attr: replace(getattr(cfg, attr), kind=value.strip())})
            elif key == "paper_ts":
                if _to_bool(value):
                    cfg = cfg.with_paper_ts()
            elif key in _TOP:
                cfg = _replace_field(cfg, _TOP[key], value)
            else:
                raise ParameterError(f"unknown setting {key!r}")
            continue
        if head == "pretune" and rest == "duration":
            cfg = replace(cfg, pretune_duration=float(value))
        elif head == "steady" and rest in ("start", "end"):
            lo, hi = cfg.steady_window
            cfg = replace(cfg, steady_window=(float(value), hi) if rest == "start" else (lo, float(value)))
        elif head == "valve" and rest in ("lo", "hi"):
            lo, hi = cfg.valve
            cfg = replace(cfg, valve=(float(value), hi) if rest == "lo" else (lo, float(value)))
        elif head in _NESTED:
            attr = _NESTED[head]
            if attr.endswith("trajectory") and rest == "trajectory":
                rest = "kind"
            cfg = replace(cfg, **{attr: _replace_field(getattr(cfg, attr), rest, value)})
        else:
            raise ParameterError(f"unknown setting {key!r}")
    return cfg


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return apply_settings(base or ExperimentConfig(), parse_kv(text))
