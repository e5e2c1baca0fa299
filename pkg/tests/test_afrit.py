import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afmpc.afrit import (DfRlsState, RegressorFilter, RegressorSample, build_regressor,
                         df_rls_update, duality_error, make_df_rls, min_eig, pe_check,
                         regressor_batch)
from afmpc.errors import NumericalDegeneracyError, ParameterError
from afmpc.pid import pid_regressor_batch
from afmpc.plmodel import make_pl, pl_filter_array


def feed(state, phis, ds):
    for phi, d in zip(phis, ds):
        state = df_rls_update(state, RegressorSample(phi, d))
    return state


class TestDfRls:
    def test_defaults(self):
        s = make_df_rls([0.1, 0.1, 0.01], p0_scale=1e3, r0_scale=1e-3)
        assert s.mu == 0.99 and s.eps == 1e-3
        np.testing.assert_array_equal(s.p_mat, 1e3 * np.eye(3))
        np.testing.assert_array_equal(s.r_mat, 1e-3 * np.eye(3))

    def test_zero_regressor_unchanged(self):
        s = make_df_rls([1.0, 2.0, 3.0])
        assert df_rls_update(s, RegressorSample(np.zeros(3), 5.0)) is s

    def test_deadzone_is_exact(self, rng):
        s = make_df_rls(rng.normal(size=3), eps=0.1)
        phi = rng.normal(size=3)
        phi *= 0.1 / np.linalg.norm(phi)
        assert df_rls_update(s, RegressorSample(phi, 3.0)) is s
        moved = df_rls_update(s, RegressorSample(phi * 1.01, 3.0))
        assert not np.array_equal(moved.theta_hat, s.theta_hat)

    def test_scalar_hand_computation(self):
        s = DfRlsState(np.zeros(1), np.ones((1, 1)), np.ones((1, 1)), mu=0.5, eps=0.0)
        out = df_rls_update(s, RegressorSample(np.ones(1), 1.0))
        assert out.r_mat[0, 0] == pytest.approx(1.5, abs=1e-15)
        assert out.p_mat[0, 0] == pytest.approx(2 / 3, abs=1e-15)
        assert out.theta_hat[0] == pytest.approx(2 / 3, abs=1e-15)
        assert out.p_mat[0, 0] * out.r_mat[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_unit_forgetting_is_plain_rls(self, rng):
        s = make_df_rls(np.zeros(3), mu=1.0, eps=0.0, p0_scale=10.0)
        P, theta = s.p_mat.copy(), s.theta_hat.copy()
        for _ in range(50):
            phi, d = rng.normal(size=3), rng.normal()
            s = df_rls_update(s, RegressorSample(phi, d))
            k = P @ phi / (1 + phi @ P @ phi)
            theta = theta + k * (d - phi @ theta)
            P = P - np.outer(k, phi @ P)
            np.testing.assert_allclose(s.theta_hat, theta, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(s.p_mat, P, rtol=1e-9, atol=1e-12)

    def test_batch_equivalence(self, rng):
        theta0 = np.array([0.5, -1.0, 2.0])
        s = make_df_rls(theta0, mu=1.0, eps=0.0, p0_scale=1e3, r0_scale=1e-3)
        phis = rng.normal(size=(500, 3))
        ds = phis @ [1.0, 2.0, 3.0] + 0.1 * rng.normal(size=500)
        s = feed(s, phis, ds)
        # exact oracle includes the prior information R0 theta0
        R = 1e-3 * np.eye(3) + phis.T @ phis
        want = np.linalg.solve(R, 1e-3 * theta0 + phis.T @ ds)
        np.testing.assert_allclose(s.theta_hat, want, rtol=1e-9)

    def test_information_weighted_error_non_increasing(self, rng):
        truth = rng.normal(size=3)
        s = make_df_rls(np.zeros(3), mu=1.0, eps=0.0, p0_scale=100.0)
        err = s.theta_hat - truth
        v_prev = err @ s.r_mat @ err
        for _ in range(300):
            phi = rng.normal(size=3) * [1, 0.1, 10]
            s = df_rls_update(s, RegressorSample(phi, phi @ truth))
            err = s.theta_hat - truth
            v = err @ s.r_mat @ err
            assert v <= v_prev * (1 + 1e-9) + 1e-15
            v_prev = v

    def test_scalar_error_non_increasing(self, rng):
        s = make_df_rls(np.zeros(1), mu=1.0, eps=0.0, p0_scale=5.0)
        prev = 2.0
        for _ in range(200):
            phi = rng.normal(size=1)
            s = df_rls_update(s, RegressorSample(phi, 2.0 * phi[0]))
            cur = abs(s.theta_hat[0] - 2.0)
            assert cur <= prev + 1e-15
            prev = cur

    def test_non_pe_stream_keeps_information_positive(self):
        s = make_df_rls(np.zeros(3), eps=0.0)
        phi = np.array([1.0, 0.1, 0.0])
        for _ in range(5000):
            s = df_rls_update(s, RegressorSample(phi, 1.0))
        assert min_eig(s.r_mat) > 0
        assert duality_error(s) < 1e-6
        np.testing.assert_allclose(s.r_mat, s.r_mat.T, atol=0)

    @given(st.integers(0, 2 ** 31), st.floats(0.5, 1.0))
    def test_invariants_on_random_streams(self, seed, mu):
        rng = np.random.default_rng(seed)
        s = make_df_rls(rng.normal(size=3), mu=mu, eps=1e-3)
        for _ in range(60):
            phi = rng.normal(size=3) * rng.choice([0.0, 1e-4, 1.0, 10.0])
            s = df_rls_update(s, RegressorSample(phi, rng.normal()))
            assert min_eig(s.r_mat) > 0
            assert duality_error(s) < 1e-6
            np.testing.assert_array_equal(s.p_mat, s.p_mat.T)

    def test_degenerate_information(self):
        s = DfRlsState(np.zeros(2), np.eye(2), np.zeros((2, 2)), eps=0.0)
        with pytest.raises(NumericalDegeneracyError):
            df_rls_update(s, RegressorSample(np.ones(2), 1.0))

    @pytest.mark.parametrize("kw", [dict(mu=0.0), dict(mu=1.5), dict(eps=-1.0), dict(p0_scale=0.0)])
    def test_bad_parameters(self, kw):
        with pytest.raises(ParameterError):
            make_df_rls(np.zeros(3), **kw)


class TestRegressor:
    def stream(self, y, u, gm):
        f = RegressorFilter()
        phis, ds = [], []
        u_prev = 0.0
        for yk, uk in zip(y, u):
            f, smp = build_regressor(f, yk, u_prev, gm)
            phis.append(smp.phi)
            ds.append(smp.d)
            u_prev = uk
        return np.array(phis), np.array(ds)

    def test_zero_signals(self):
        phis, ds = self.stream(np.zeros(20), np.zeros(20), make_pl(0.05, 0.01))
        assert not phis.any() and not ds.any()

    def test_constant_output_washes_out(self):
        gm = make_pl(0.05, 0.01)
        phis, _ = self.stream(np.full(3000, 4.0), np.zeros(3000), gm)
        # proportional and derivative channels vanish; the integral of the
        # decaying transient settles at c ts / b_p
        assert abs(phis[-1, 0]) < 1e-12 and abs(phis[-1, 2]) < 1e-12
        assert phis[-1, 1] == pytest.approx(4.0 * gm.ts / gm.b_p, rel=1e-12)

    def test_matches_batch_oracle(self, rng):
        tc, ts = 0.04, 0.005
        y, u = rng.normal(size=400), rng.normal(size=400)
        phis, ds = self.stream(y, u, make_pl(tc, ts))
        # independent composition: (1 - G_m) y, then beta(z); G_m u with its one-step delay
        w = y - pl_filter_array(tc, ts, y)
        np.testing.assert_allclose(phis, pid_regressor_batch(w, ts), atol=1e-10)
        np.testing.assert_allclose(ds, pl_filter_array(tc, ts, u), atol=1e-10)
        bphi, bd = regressor_batch(y, u, tc, ts)
        np.testing.assert_allclose(phis, bphi, atol=1e-10)
        np.testing.assert_allclose(ds, bd, atol=1e-10)


class TestPeCheck:
    def test_cycling_basis(self):
        phis = np.tile(np.eye(3), (5, 1))
        assert pe_check(phis, 3, 1.0)

    def test_constant_direction(self):
        phis = np.tile([1.0, 0.0, 0.0], (20, 1))
        for delta in (1, 5, 10):
            assert not pe_check(phis, delta, 1e-9)

    def test_brute_force(self, rng):
        for _ in range(30):
            phis = rng.uniform(-1, 1, size=(25, 3))
            delta = int(rng.integers(2, 8))
            alpha0 = float(rng.uniform(0.01, 1.0))
            want = True
            for s in range(phis.shape[0] - delta):
                gram = sum(np.outer(p, p) for p in phis[s:s + delta + 1])
                if np.linalg.eigvalsh(gram).min() < alpha0:
                    want = False
            assert pe_check(phis, delta, alpha0) == want

    def test_bad_arguments(self):
        with pytest.raises(ParameterError):
            pe_check(np.eye(3), 0, 1.0)
        with pytest.raises(ParameterError):
            pe_check(np.eye(3), 3, 1.0)
