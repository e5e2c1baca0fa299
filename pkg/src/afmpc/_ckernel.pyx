# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop kernel. Mirrors ``afmpc._pykernel.simulate`` step for step."""

import numpy as np

from libc.math cimport ceil, exp, fabs, pow, sqrt, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset

cdef enum:
    N_COLS = 13
    MAX_QP_ITER = 200

cdef double HYST_MAX_DU = 0.05


cdef struct Work:
    int hp
    int hu
    double *G       # hp x hu
    double *F       # hp
    double *U       # hu x hu
    double *u0      # hu
    double *DU      # hu x hu
    double *c2      # hu
    double *H       # hu x hu
    double *f       # hu
    double *v       # hu
    double *p       # hu
    double *g       # hu
    double *K       # (2hu) x (2hu)
    double *rhs     # 2hu
    int *work       # active constraint indices
    int n_work


cdef int gauss_solve(double *A, double *b, int n) nogil:
    """In-place Gaussian elimination with partial pivoting; solution in b."""
    cdef int i, j, k, piv
    cdef double amax, t, factor
    for k in range(n):
        piv = k
        amax = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > amax:
                amax = fabs(A[i * n + k])
                piv = i
        if amax == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                t = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = t
            t = b[k]
            b[k] = b[piv]
            b[piv] = t
        for i in range(k + 1, n):
            factor = A[i * n + k] / A[k * n + k]
            if factor != 0.0:
                for j in range(k, n):
                    A[i * n + j] -= factor * A[k * n + j]
                b[i] -= factor * b[k]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, n):
            t -= A[i * n + j] * b[j]
        b[i] = t / A[i * n + i]
    return 0


cdef void condense(Work *w, double a, double b, double ts, double x0, const double *r,
                   double q, double rw, double ruw, double kp, double ki, double kd,
                   double integ, double e_prev, double u_c_prev, double u_prev,
                   double *const_out) nogil:
    cdef int hp = w.hp, hu = w.hu
    cdef int i, j, m, col
    cdef double fx = x0, s, kd_ts = kd / ts, res
    cdef double *G = w.G
    cdef double *U = w.U
    # G, F
    for j in range(hu):
        G[j] = 0.0
    for i in range(hp):
        if i > 0:
            for j in range(hu):
                G[i * hu + j] = a * G[(i - 1) * hu + j]
        else:
            for j in range(hu):
                G[j] = a * G[j]
        col = i if i < hu - 1 else hu - 1
        G[i * hu + col] += b
        fx = a * fx
        w.F[i] = fx
    # E = I - G_in, e_c = -F_in; U = kp E + ki ts L E + kd/ts D E
    # E[i][j] = delta_ij - (i>0 ? G[i-1][j] : 0)
    cdef double Ecur, Eprev, Lsum
    cdef double ec, ec_prev, ec_sum
    for j in range(hu):
        Lsum = 0.0
        Eprev = 0.0
        for i in range(hu):
            Ecur = (1.0 if i == j else 0.0) - (G[(i - 1) * hu + j] if i > 0 else 0.0)
            Lsum += Ecur
            U[i * hu + j] = kp * Ecur + ki * ts * Lsum + kd_ts * (Ecur - Eprev)
            Eprev = Ecur
    ec_sum = 0.0
    ec_prev = 0.0
    for i in range(hu):
        ec = -(x0 if i == 0 else w.F[i - 1])
        ec_sum += ec
        w.u0[i] = (kp * ec + integ + ki * ts * ec_sum
                   + kd_ts * ((ec - ec_prev) - (e_prev if i == 0 else 0.0)))
        ec_prev = ec
    # DU = D U, c2 = D u0 - u_prev e0
    for i in range(hu):
        for j in range(hu):
            w.DU[i * hu + j] = U[i * hu + j] - (U[(i - 1) * hu + j] if i > 0 else 0.0)
        w.c2[i] = w.u0[i] - (w.u0[i - 1] if i > 0 else u_prev)
    # H = 2(q G'G + rw D'D + ruw DU'DU), f = 2(q G'(F-r) - rw D'c1 + ruw DU'c2)
    for i in range(hu):
        for j in range(hu):
            s = 0.0
            for m in range(hp):
                s += q * G[m * hu + i] * G[m * hu + j]
            for m in range(hu):
                s += ruw * w.DU[m * hu + i] * w.DU[m * hu + j]
            # D'D: tridiagonal with 2 on the diagonal (1 at the last), -1 off-diagonal
            if i == j:
                s += rw * (2.0 if i < hu - 1 else 1.0)
            elif i - j == 1 or j - i == 1:
                s -= rw
            w.H[i * hu + j] = 2.0 * s
    for i in range(hu):
        s = 0.0
        for m in range(hp):
            s += q * G[m * hu + i] * (w.F[m] - r[m])
        for m in range(hu):
            s += ruw * w.DU[m * hu + i] * w.c2[m]
        if i == 0:
            s -= rw * u_c_prev
        w.f[i] = 2.0 * s
    s = 0.0
    for m in range(hp):
        res = w.F[m] - r[m]
        s += q * res * res
    s += rw * u_c_prev * u_c_prev
    for m in range(hu):
        s += ruw * w.c2[m] * w.c2[m]
    const_out[0] = s


cdef double objective(Work *w, const double *r, double q, double rw, double ruw,
                      double u_c_prev, double u_prev) nogil:
    # summed residuals; the condensed quadratic form cancels badly near zero
    cdef int hp = w.hp, hu = w.hu, i, j
    cdef double s = 0.0, res, uh, uh_prev = u_prev
    for i in range(hp):
        res = w.F[i] - r[i]
        for j in range(hu):
            res += w.G[i * hu + j] * w.v[j]
        s += q * res * res
    for i in range(hu):
        res = w.v[i] - (w.v[i - 1] if i > 0 else u_c_prev)
        uh = w.u0[i]
        for j in range(hu):
            uh += w.U[i * hu + j] * w.v[j]
        s += rw * res * res + ruw * (uh - uh_prev) * (uh - uh_prev)
        uh_prev = uh
    return s


cdef inline double arow_dot(Work *w, int jrow, const double *x) nogil:
    """Row ``jrow`` of A = [U; -U] dotted with x."""
    cdef int hu = w.hu, i = jrow if jrow < hu else jrow - hu
    cdef int c
    cdef double s = 0.0
    for c in range(i + 1):
        s += w.U[i * hu + c] * x[c]
    return s if jrow < hu else -s


cdef int in_work(Work *w, int j) nogil:
    cdef int t
    for t in range(w.n_work):
        if w.work[t] == j:
            return 1
    return 0


cdef int solve_qp(Work *w, double lo, double hi, int *iters) nogil:
    """Primal active set; result in w.v. Returns 0 ok, 1 infeasible, -1 singular."""
    cdef int n = w.hu, i, j, c, t, it, m, sz, jmin, blocking
    cdef double s, ftol, pmax, vmax, gmax, lmin, alpha, ap, step, bj, dmax, dmin
    cdef int feasible = 1
    # unconstrained optimum
    for i in range(n * n):
        w.K[i] = w.H[i]
    for i in range(n):
        w.v[i] = -w.f[i]
    if gauss_solve(w.K, w.v, n) != 0:
        return -1
    ftol = 1e-12 * max(1.0, max(fabs(lo), fabs(hi)))
    w.n_work = 0
    for i in range(n):
        s = w.u0[i]
        for c in range(i + 1):
            s += w.U[i * n + c] * w.v[c]
        w.g[i] = s          # reuse g as the unconstrained input plan
        if s < lo - ftol or s > hi + ftol:
            feasible = 0
    if feasible:
        iters[0] = 1
        return 0
    dmax = 0.0
    dmin = 1e300
    for i in range(n):
        dmax = max(dmax, fabs(w.U[i * n + i]))
        dmin = min(dmin, fabs(w.U[i * n + i]))
    if dmin <= 1e-12 * max(1.0, dmax):
        return -1
    # feasible start: clip in input space, forward-substitute back to plan space
    for i in range(n):
        s = min(max(w.g[i], lo), hi) - w.u0[i]
        for c in range(i):
            s -= w.U[i * n + c] * w.v[c]
        w.v[i] = s / w.U[i * n + i]
    for i in range(n):
        if w.g[i] < lo:
            w.work[w.n_work] = i
            w.n_work += 1
    for i in range(n):
        if w.g[i] > hi:
            w.work[w.n_work] = n + i
            w.n_work += 1

    for it in range(1, MAX_QP_ITER + 1):
        iters[0] = it
        for i in range(n):
            s = w.f[i]
            for c in range(n):
                s += w.H[i * n + c] * w.v[c]
            w.g[i] = s
        m = w.n_work
        sz = n + m
        memset(w.K, 0, sz * sz * sizeof(double))
        for i in range(n):
            for c in range(n):
                w.K[i * sz + c] = w.H[i * n + c]
        for t in range(m):
            j = w.work[t]
            i = j if j < n else j - n
            for c in range(i + 1):
                s = w.U[i * n + c] if j < n else -w.U[i * n + c]
                w.K[c * sz + n + t] = -s
                w.K[(n + t) * sz + c] = s
        for i in range(n):
            w.rhs[i] = -w.g[i]
        for i in range(m):
            w.rhs[n + i] = 0.0
        if gauss_solve(w.K, w.rhs, sz) != 0:
            return -1
        pmax = 0.0
        vmax = 0.0
        gmax = 0.0
        for i in range(n):
            w.p[i] = w.rhs[i]
            pmax = max(pmax, fabs(w.p[i]))
            vmax = max(vmax, fabs(w.v[i]))
            gmax = max(gmax, fabs(w.g[i]))
        # a full working set of independent rows pins v to a vertex
        if m == n or pmax <= 1e-12 * max(1.0, vmax):
            if m == 0:
                return 0
            jmin = 0
            lmin = w.rhs[n]
            for t in range(1, m):
                if w.rhs[n + t] < lmin:
                    lmin = w.rhs[n + t]
                    jmin = t
            if lmin >= -1e-12 * max(1.0, gmax):
                return 0
            for t in range(jmin, m - 1):
                w.work[t] = w.work[t + 1]
            w.n_work -= 1
            continue
        alpha = 1.0
        blocking = -1
        for j in range(2 * n):
            # the mirror of a working row is parallel to it; never add both
            if in_work(w, j) or in_work(w, j + n if j < n else j - n):
                continue
            ap = arow_dot(w, j, w.p)
            if ap < -1e-14:
                i = j if j < n else j - n
                bj = (lo - w.u0[i]) if j < n else (w.u0[i] - hi)
                step = (bj - arow_dot(w, j, w.v)) / ap
                if step < alpha:
                    alpha = max(step, 0.0)
                    blocking = j
        for i in range(n):
            w.v[i] += alpha * w.p[i]
        if blocking >= 0:
            w.work[w.n_work] = blocking
            w.n_work += 1
    return 0


def _py_solve(mv, ts, tc, y, r_preview, kp, ki, kd, integ, e_prev, u_c_prev, u_prev):
    """Reference solver for the rare singular input map; None if it fails."""
    from afmpc import mpc
    from afmpc.errors import AfmpcError
    from afmpc.pid import PidGains, PidState
    from afmpc.plmodel import PlModel
    cfg = mpc.MpcConfig(int(mv[0]), int(mv[1]), *[float(v) for v in mv[2:7]])
    try:
        sol = mpc.solve(cfg, PlModel(tc, ts), y, np.asarray(r_preview), PidGains(kp, ki, kd),
                        PidState(integ, e_prev), u_c_prev, u_prev)
    except (AfmpcError, np.linalg.LinAlgError):
        return None
    return float(sol.u_c_plan[0]), sol.j, 1 if sol.active_constraints > 0 else 0


cdef inline double hysteresis(double z, double du, double A, double beta, double gamma,
                              double nexp, double asym) nogil:
    cdef int n_sub = <int>ceil(fabs(du) / HYST_MAX_DU)
    if n_sub < 1:
        n_sub = 1
    cdef double h = du / n_sub
    cdef double scale = 1.0 + asym * ((h > 0) - (h < 0))
    cdef double dz
    cdef int i
    for i in range(n_sub):
        dz = (A * h - beta * fabs(h) * pow(fabs(z), nexp - 1.0) * z
              - gamma * h * pow(fabs(z), nexp))
        z = z + scale * dz
    return z


cdef inline double clampd(double x, double lo, double hi) nogil:
    return lo if x < lo else (hi if x > hi else x)


def simulate(int mode, r_in, noise_in, double ts, plant_in, double y0, gains_in,
             double tc, rls_in, mpc_in, double valve_lo, double valve_hi):
    cdef const double[::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef const double[::1] noise = np.ascontiguousarray(noise_in, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(plant_in, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(gains_in, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(rls_in, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(mpc_in, dtype=np.float64)
    cdef Py_ssize_t n = noise.shape[0]
    cdef int hp = <int>mv[0], hu = <int>mv[1]
    if r.shape[0] < n + hp:
        raise ValueError("reference needs n + hp samples")
    out_arr = np.full((n, N_COLS), np.nan)
    cdef double[:, ::1] out = out_arr

    cdef double q = mv[2], rw = mv[3], ruw = mv[4], umin = mv[5], umax = mv[6]
    cdef double k_lag = pv[0], gain = pv[1], bwA = pv[2], bwb = pv[3], bwg = pv[4]
    cdef double bwn = pv[5], asym = pv[6], sat_lo = pv[7], sat_hi = pv[8]
    cdef double a_lag = exp(-ts / k_lag)
    cdef double a_pl = exp(-ts / tc)
    cdef double b_pl = 1.0 - a_pl
    cdef int adaptive = mode == 1 or mode == 3
    cdef int use_mpc = mode == 2 or mode == 3

    # plant
    cdef double x_lag = y0, z = 0.0, plant_u_prev = y0 / gain
    cdef double y = clampd(x_lag, sat_lo, sat_hi) + noise[0]
    # PID
    cdef double kp = gv[0], ki = gv[1], kd = gv[2], integ = 0.0, e_prev = 0.0
    # RLS
    cdef double mu = rv[0], eps = rv[1], c0, c1, c2
    cdef int guard = rv.shape[0] > 4 and rv[4] != 0.0
    cdef int held = 0
    cdef double P[9]
    cdef double R[9]
    cdef double Pb[9]
    cdef double Rn[9]
    cdef double th[3]
    cdef double phi[3]
    cdef double rphi[3]
    cdef double pbphi[3]
    cdef int i, j, c, t
    for i in range(9):
        P[i] = 0.0
        R[i] = 0.0
    for i in range(3):
        P[i * 4] = rv[2]
        R[i * 4] = rv[3]
    th[0] = kp
    th[1] = ki
    th[2] = kd
    # regressor filters
    cdef double x_y = 0.0, x_u = 0.0, w_prev = 0.0, w_integ = 0.0, wk, dreg
    cdef double s, denom, fac, err, nrm

    cdef double u_prev_applied = 0.0, u_c_prev = y0, u_prev = plant_u_prev
    cdef double x_pl = y0
    cdef double u_c, u, u_applied, j_mpc, const_term, du
    cdef int active, status, iters
    cdef Py_ssize_t k, ridx

    cdef Work w
    w.hp = hp
    w.hu = hu
    w.G = <double *>malloc(hp * hu * sizeof(double))
    w.F = <double *>malloc(hp * sizeof(double))
    w.U = <double *>malloc(hu * hu * sizeof(double))
    w.u0 = <double *>malloc(hu * sizeof(double))
    w.DU = <double *>malloc(hu * hu * sizeof(double))
    w.c2 = <double *>malloc(hu * sizeof(double))
    w.H = <double *>malloc(hu * hu * sizeof(double))
    w.f = <double *>malloc(hu * sizeof(double))
    w.v = <double *>malloc(hu * sizeof(double))
    w.p = <double *>malloc(hu * sizeof(double))
    w.g = <double *>malloc(hu * sizeof(double))
    w.K = <double *>malloc(4 * hu * hu * sizeof(double))
    w.rhs = <double *>malloc(2 * hu * sizeof(double))
    w.work = <int *>malloc(2 * hu * sizeof(int))
    cdef double *rprev = <double *>malloc(hp * sizeof(double))
    cdef Py_ssize_t failed = -1
    try:
        for k in range(n):
            if adaptive:
                # regressor: phi = beta (1 - G_m) y, d = G_m u
                x_u = a_pl * x_u + b_pl * u_prev_applied
                wk = y - x_y
                x_y = a_pl * x_y + b_pl * y
                w_integ = w_integ + ts * wk
                phi[0] = wk
                phi[1] = w_integ
                phi[2] = (wk - w_prev) / ts
                w_prev = wk
                dreg = x_u
                nrm = sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
                if nrm > eps:
                    for i in range(3):
                        s = 0.0
                        for c in range(3):
                            s += R[i * 3 + c] * phi[c]
                        rphi[i] = s
                    s = phi[0] * rphi[0] + phi[1] * rphi[1] + phi[2] * rphi[2]
                    if not s > 0:
                        failed = k
                        break
                    fac = (1.0 - mu) / mu / s
                    for i in range(3):
                        for c in range(3):
                            Pb[i * 3 + c] = P[i * 3 + c] + fac * phi[i] * phi[c]
                    # R <- (I - M) R + phi phi', M = (1-mu) R phi phi' / s
                    for i in range(3):
                        for c in range(3):
                            denom = 0.0
                            for j in range(3):
                                denom += phi[j] * R[j * 3 + c]
                            Rn[i * 3 + c] = (R[i * 3 + c] - (1.0 - mu) * rphi[i] * denom / s
                                             + phi[i] * phi[c])
                    for i in range(3):
                        s = 0.0
                        for c in range(3):
                            s += Pb[i * 3 + c] * phi[c]
                        pbphi[i] = s
                    denom = 1.0 + phi[0] * pbphi[0] + phi[1] * pbphi[1] + phi[2] * pbphi[2]
                    for i in range(3):
                        for c in range(3):
                            P[i * 3 + c] = Pb[i * 3 + c] - pbphi[i] * pbphi[c] / denom
                    for i in range(3):
                        for c in range(i, 3):
                            s = 0.5 * (Rn[i * 3 + c] + Rn[c * 3 + i])
                            R[i * 3 + c] = s
                            R[c * 3 + i] = s
                            s = 0.5 * (P[i * 3 + c] + P[c * 3 + i])
                            P[i * 3 + c] = s
                            P[c * 3 + i] = s
                    err = dreg - (phi[0] * th[0] + phi[1] * th[1] + phi[2] * th[2])
                    for i in range(3):
                        s = 0.0
                        for c in range(3):
                            s += P[i * 3 + c] * phi[c]
                        rphi[i] = s
                    for i in range(3):
                        th[i] = th[i] + rphi[i] * err
                # zeros of c0 + c1 z^-1 + c2 z^-2 strictly inside the unit circle (Jury)
                c0 = th[0] + th[1] * ts + th[2] / ts
                c1 = -(th[0] + 2.0 * th[2] / ts)
                c2 = th[2] / ts
                held = guard and not (c0 > 0 and fabs(c2) < c0 and fabs(c1) < c0 + c2)
                if not held:
                    kp = th[0]
                    ki = th[1]
                    kd = th[2]

            j_mpc = 0.0
            active = 0
            if use_mpc:
                for i in range(hp):
                    ridx = k + 1 + i
                    rprev[i] = r[ridx]
                condense(&w, a_pl, b_pl, ts, y, rprev, q, rw, ruw, kp, ki, kd,
                         integ, e_prev, u_c_prev, u_prev, &const_term)
                iters = 0
                status = solve_qp(&w, umin, umax, &iters)
                if status == 0:
                    u_c = w.v[0]
                    j_mpc = objective(&w, rprev, q, rw, ruw, u_c_prev, u_prev)
                    if w.n_work > 0:
                        active = 1
                else:
                    # singular input map: defer to the reference solver
                    sol = _py_solve(mv, ts, tc, y, r[k + 1:k + 1 + hp], kp, ki, kd,
                                    integ, e_prev, u_c_prev, u_prev)
                    if sol is None:
                        failed = k
                        break
                    u_c, j_mpc, active = sol
            else:
                u_c = r[k]

            err = u_c - y
            integ = integ + ki * ts * err
            u = kp * err + integ + kd * (err - e_prev) / ts
            e_prev = err
            if not isfinite(u):
                failed = k
                break
            if u < umin - 1e-9 or u > umax + 1e-9:
                active = 2
            u_applied = clampd(u, valve_lo, valve_hi)

            out[k, 0] = k * ts
            out[k, 1] = r[k]
            out[k, 2] = y
            out[k, 3] = u_applied
            out[k, 4] = u_c
            out[k, 5] = kp
            out[k, 6] = ki
            out[k, 7] = kd
            out[k, 8] = x_pl - y
            out[k, 9] = j_mpc
            out[k, 10] = active
            out[k, 11] = u
            out[k, 12] = held

            x_pl = a_pl * x_pl + b_pl * u_c
            u_c_prev = u_c
            u_prev = u
            u_prev_applied = u_applied
            if k + 1 < n:
                du = u_applied - plant_u_prev
                z = hysteresis(z, du, bwA, bwb, bwg, bwn, asym)
                x_lag = a_lag * x_lag + (1.0 - a_lag) * (gain * u_applied + z)
                plant_u_prev = u_applied
                y = clampd(x_lag, sat_lo, sat_hi) + noise[k + 1]
    finally:
        free(w.G); free(w.F); free(w.U); free(w.u0); free(w.DU); free(w.c2)
        free(w.H); free(w.f); free(w.v); free(w.p); free(w.g); free(w.K)
        free(w.rhs); free(w.work); free(rprev)
    return out_arr, failed
