import math
from dataclasses import replace

import pytest

from afmpc.config import (CASES, LAMBDAS, PAPER_TS, ExperimentConfig, RlsConfig, Trajectory,
                          apply_settings, load_config, parse_kv)
from afmpc.errors import ParameterError
from afmpc.pid import PidGains


class TestDefaults:
    def test_experiment_grid(self):
        assert LAMBDAS == (1.0, 2.5, 5.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0)
        assert CASES[1] == PidGains(0.1, 0.1, 0.01)
        assert CASES[2] == PidGains(0.1, 0.1, 0.001)

    def test_estimator_and_mpc_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.rls.mu, cfg.rls.eps, cfg.rls.p0_scale, cfg.rls.r0_scale) == (0.99, 1e-3, 1e3, 1e-3)
        assert (cfg.mpc.hp, cfg.mpc.hu, cfg.mpc.q, cfg.mpc.r_w, cfg.mpc.ru_w) == (5, 5, 1, 40, 1)
        assert cfg.ts == 1e-3 and cfg.duration == 100 and cfg.steady_window == (55, 65)

    def test_paper_ts(self):
        assert ExperimentConfig().with_paper_ts().ts == PAPER_TS == 1e-4

    def test_rls_vector(self):
        assert RlsConfig(guard=False).as_vector() == [0.99, 1e-3, 1e3, 1e-3, 0.0]

    @pytest.mark.parametrize("kw", [dict(mode="MPC"), dict(ts=0), dict(duration=-1),
                                    dict(lam=-1), dict(repeats=0), dict(seed=-1),
                                    dict(steady_window=(5, 5)), dict(valve=(10, 0)),
                                    dict(ts=math.inf)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            ExperimentConfig(**kw)

    def test_trajectory(self):
        assert Trajectory("sine").generate(0.01, 1).values[0] == 30
        with pytest.raises(ParameterError):
            Trajectory("ramp")


class TestParse:
    def test_comments_and_whitespace(self):
        text = "# header\nmode = FMPC  # inline\n\nplant.k_lag=0.2\n"
        assert parse_kv(text) == {"mode": "FMPC", "plant.k_lag": "0.2"}

    def test_case_sensitive_keys(self):
        assert "plant.bw_A" in parse_kv("plant.bw_A = 2")

    def test_duplicate_key(self):
        with pytest.raises(ParameterError):
            parse_kv("mode = PID\nmode = FMPC\n")

    def test_garbage(self):
        with pytest.raises(ParameterError):
            parse_kv("just words\n")


class TestApply:
    def test_full_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("\n".join([
            "mode = afrit", "lambda = 2.5", "case = 2", "seed = 7", "repeats = 3",
            "duration = 10", "y0 = 5", "tc0 = 0.02",
            "plant.k_lag = 0.2", "plant.bw_A = 1.5", "plant.noise_std = 0",
            "mpc.hp = 8", "mpc.hu = 3", "mpc.r_w = 10",
            "rls.mu = 0.95", "rls.guard = off",
            "control.trajectory = sine", "pretune.trajectory = sine", "pretune.freq = 0.5",
            "pretune.duration = 5", "steady.start = 2", "steady.end = 8",
            "valve.hi = 9", "theta0.kd = 0.005",
        ]), encoding="utf-8")
        cfg = load_config(path)
        assert cfg.mode == "AFRIT" and cfg.lam == 2.5 and cfg.seed == 7 and cfg.repeats == 3
        assert cfg.duration == 10 and cfg.y0 == 5 and cfg.tc0 == 0.02
        assert cfg.theta0 == PidGains(0.1, 0.1, 0.005) and cfg.case == 2
        assert cfg.plant.k_lag == 0.2 and cfg.plant.bw_A == 1.5 and cfg.plant.noise_std == 0
        assert (cfg.mpc.hp, cfg.mpc.hu, cfg.mpc.r_w) == (8, 3, 10)
        assert cfg.rls.mu == 0.95 and cfg.rls.guard is False
        assert cfg.trajectory.kind == "sine"
        assert cfg.pretune_trajectory.kind == "sine" and cfg.pretune_trajectory.freq == 0.5
        assert cfg.pretune_duration == 5 and cfg.steady_window == (2, 8) and cfg.valve == (0, 10 - 1)

    def test_paper_ts_key(self):
        assert apply_settings(ExperimentConfig(), {"paper_ts": "yes"}).ts == 1e-4

    def test_case_then_override(self):
        cfg = apply_settings(ExperimentConfig(), {"case": "2", "theta0.kp": "0.3"})
        assert cfg.theta0 == PidGains(0.3, 0.1, 0.001)

    @pytest.mark.parametrize("settings", [{"nonsense": "1"}, {"plant.nope": "1"},
                                          {"mpc.hp": "2.5"}, {"plant.k_lag": "abc"},
                                          {"rls.guard": "maybe"}, {"case": "3"},
                                          {"mode": "MPC"}, {"steady.middle": "3"},
                                          {"control": "ramp"}, {"plant.k_lag": "-1"}])
    def test_rejected(self, settings):
        with pytest.raises(ParameterError):
            apply_settings(ExperimentConfig(), settings)
