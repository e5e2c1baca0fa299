import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afmpc.pid import (PidGains, PidState, admissible, controller_polynomials, pid_regressor,
                       pid_regressor_batch, pid_step)

finite = st.floats(-10, 10)
gains_st = st.builds(PidGains, finite, finite, finite)


def run(gains, errors, ts):
    s = PidState()
    out = []
    for e in errors:
        s, u = pid_step(gains, s, e, ts)
        out.append(u)
    return s, np.array(out)


class TestPidStep:
    def test_pure_p(self):
        assert pid_step(PidGains(1, 0, 0), PidState(), 2.0, 0.01)[1] == 2

    def test_integrator_ramp(self):
        _, u = run(PidGains(0, 1, 0), [1, 1, 1], 0.01)
        np.testing.assert_allclose(u, [0.01, 0.02, 0.03], atol=1e-15)

    def test_tuned_gains_first_step(self):
        g = PidGains(0.46016, 0.80296, 9.0583e-3)
        ts = 1e-3
        assert pid_step(g, PidState(), 1.0, ts)[1] == pytest.approx(
            0.46016 + 0.80296 * ts + 9.0583e-3 / ts, rel=1e-14)

    def test_zero_gains(self, rng):
        _, u = run(PidGains(0, 0, 0), rng.normal(size=100), 0.01)
        assert np.all(u == 0)

    def test_integrator_state(self, rng):
        e = rng.normal(size=200)
        s, _ = run(PidGains(0.3, 2.0, 0.1), e, 0.01)
        assert s.integ == pytest.approx(2.0 * 0.01 * e.sum(), rel=1e-12)

    def test_non_finite_gains_rejected(self):
        with pytest.raises(ValueError):
            PidGains(np.inf, 0, 0)

    @given(gains_st, gains_st, st.lists(finite, min_size=1, max_size=30))
    def test_linear_in_gains(self, g1, g2, errors):
        ts = 0.01
        _, u1 = run(g1, errors, ts)
        _, u2 = run(g2, errors, ts)
        _, u12 = run(g1 + g2, errors, ts)
        np.testing.assert_allclose(u12, u1 + u2, rtol=1e-9, atol=1e-9)


class TestRegressor:
    def test_zero(self):
        assert np.all(pid_regressor(0, 0, 0, 0.01) == 0)

    def test_constant_error(self):
        ts = 0.01
        integ, e_prev = 0.0, 1.0
        for k in range(1, 6):
            phi = pid_regressor(1.0, e_prev, integ, ts)
            np.testing.assert_allclose(phi, [1.0, k * ts, 0.0], atol=1e-15)
            integ = phi[1]

    def test_matches_pid_step(self, rng):
        ts = 0.005
        g = PidGains(*rng.normal(size=3))
        e = rng.normal(size=300)
        _, u = run(g, e, ts)
        integ, e_prev = 0.0, 0.0
        for k in range(e.size):
            phi = pid_regressor(e[k], e_prev, integ, ts)
            assert g.as_array() @ phi == pytest.approx(u[k], abs=1e-12)
            integ, e_prev = phi[1], e[k]

    def test_batch_matches_stream(self, rng):
        ts = 0.01
        e = rng.normal(size=100)
        batch = pid_regressor_batch(e, ts)
        integ, e_prev = 0.0, 0.0
        for k in range(e.size):
            phi = pid_regressor(e[k], e_prev, integ, ts)
            np.testing.assert_allclose(batch[k], phi, atol=1e-12)
            integ, e_prev = phi[1], e[k]


class TestPolynomials:
    def test_numerator_reproduces_pid(self, rng):
        from scipy.signal import lfilter

        ts = 0.01
        g = PidGains(0.5, 2.0, 0.03)
        e = rng.normal(size=50)
        num, den = controller_polynomials(g, ts)
        _, u = run(g, e, ts)
        np.testing.assert_allclose(lfilter(num, den, e), u, atol=1e-12)

    def test_admissible_matches_roots(self, rng):
        ts = 1e-3
        for _ in range(500):
            g = PidGains(*rng.uniform(-1, 1, 3) * [1, 10, 0.01])
            num = controller_polynomials(g, ts)[0]
            roots = np.roots(num) if num[0] != 0 else np.array([np.inf])
            expected = num[0] > 0 and np.all(np.abs(roots) < 1)
            assert admissible(g, ts) == expected

    def test_typical_tuned_gains_admissible(self):
        assert admissible(PidGains(0.45, 3.0, 0.0099), 1e-3)
        assert not admissible(PidGains(0.1, 0.1, -0.01), 1e-3)
