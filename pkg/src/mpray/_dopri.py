"""Compiled Dormand-Prince 5(4) integrator for the MP-geodesic equation.

State layout: ``y = [x (n), v (n), c (m)]`` where the ``c`` are line integrals
carried as extra ODE components (channels).  Each channel integrates
``w(x) * (h_ij v^i v^j + b_i v^i + V)`` with ``w = 1`` or ``w = sqrt(2(k - U))``.

Field programs are packed as: system block ``[g_ij (i<=j), a_i, U]`` followed by
one block ``[h_ij (i<=j), b_i, V]`` per channel.
"""

import numba
import numpy as np

from .fieldexpr.compiled import run_programs

STATUS_EXIT = 0
STATUS_TMAX = 1
STATUS_UNDERFLOW = 2
STATUS_DOMAIN = 3
STATUS_MAXSTEPS = 4

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = np.zeros((7, 7))
A[1, :1] = [1 / 5]
A[2, :2] = [3 / 40, 9 / 40]
A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
B = A[6].copy()
E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t0 + s h) = y0 + h * K^T (P @ [s, s^2, s^3, s^4])
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@numba.njit(cache=True)
def upper_index(i, j, n):
    if i > j:
        i, j = j, i
    return i * n - (i * (i - 1)) // 2 + (j - i)


@numba.njit(cache=True)
def rhs(y, n, nch, ops, args, consts, starts, energy, wmode, dy, vals, grads, hess, sv, sg, sh):
    """Right-hand side; returns a nonzero code on a field domain error."""
    x = y[:n]
    nu = n * (n + 1) // 2
    nsys = nu + n + 1
    code = run_programs(ops, args, consts, starts, 0, nsys, x, 1, vals, grads, hess, sv, sg, sh)
    if code != 0:
        return code
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = vals[upper_index(i, j, n)]
    # force_l = -(d_j g_lk - 0.5 d_l g_jk) v^j v^k + Omega_jl v^j - d_l U
    force = np.zeros(n)
    for l in range(n):
        s = 0.0
        for j in range(n):
            for k in range(n):
                vjk = y[n + j] * y[n + k]
                s += grads[upper_index(l, k, n), j] * vjk - 0.5 * grads[upper_index(j, k, n), l] * vjk
        om = 0.0
        for j in range(n):
            omega_jl = grads[nu + l, j] - grads[nu + j, l]
            om += omega_jl * y[n + j]
        force[l] = -s + om - grads[nsys - 1, l]
    acc = np.linalg.solve(g, force)
    for i in range(n):
        dy[i] = y[n + i]
        dy[n + i] = acc[i]
    if nch > 0:
        U = vals[nsys - 1]
        wP = np.sqrt(max(2.0 * (energy - U), 0.0))
        chb = nu + n + 1
        for c in range(nch):
            p0 = nsys + c * chb
            code = run_programs(ops, args, consts, starts, p0, p0 + chb, x, 0, vals, grads, hess, sv, sg, sh)
            if code != 0:
                return code
            s = vals[chb - 1]
            for i in range(n):
                s += vals[nu + i] * y[n + i]
                for j in range(n):
                    s += vals[upper_index(i, j, n)] * y[n + i] * y[n + j]
            if wmode[c] == 1:
                s *= wP
            dy[2 * n + c] = s
    return 0


@numba.njit(cache=True)
def energy_at(y, n, ops, args, consts, starts, vals, grads, hess, sv, sg, sh):
    nu = n * (n + 1) // 2
    run_programs(ops, args, consts, starts, 0, nu + n + 1, y[:n], 0, vals, grads, hess, sv, sg, sh)
    e = vals[nu + n]
    for i in range(n):
        for j in range(n):
            e += 0.5 * vals[upper_index(i, j, n)] * y[n + i] * y[n + j]
    return e


@numba.njit(cache=True)
def rk_step(y0, h, n, nch, ops, args, consts, starts, energy, wmode, K, ynew, ytmp,
            vals, grads, hess, sv, sg, sh):
    """One Dormand-Prince step assuming ``K[0]`` holds f(y0); fills K[1..6] and ynew."""
    dim = y0.shape[0]
    for s in range(1, 7):
        for q in range(dim):
            acc = 0.0
            for r in range(s):
                acc += A[s, r] * K[r, q]
            ytmp[q] = y0[q] + h * acc
        code = rhs(ytmp, n, nch, ops, args, consts, starts, energy, wmode, K[s], vals, grads, hess, sv, sg, sh)
        if code != 0:
            return code
    for q in range(dim):
        ynew[q] = ytmp[q]  # stage 7 is evaluated at the 5th-order solution
    return 0


@numba.njit(cache=True)
def dense_eval(y0, K, h, s, out):
    dim = y0.shape[0]
    p1, p2, p3, p4 = s, s * s, s * s * s, s * s * s * s
    for q in range(dim):
        acc = 0.0
        for r in range(7):
            acc += K[r, q] * (P[r, 0] * p1 + P[r, 1] * p2 + P[r, 2] * p3 + P[r, 3] * p4)
        out[q] = y0[q] + h * acc


@numba.njit(cache=True)
def rho_of(y, n, R2):
    s = R2
    for i in range(n):
        s -= y[i] * y[i]
    return s


@numba.njit(cache=True)
def integrate_kernel(y0, n, nch, ops, args, consts, starts, energy, wmode, radius, t_max,
                     rtol, atol, hmax, max_steps, stop_at_exit, depth):
    """Integrate from ``y0``; returns (status, t_exit, y_exit, ts, ys, ks, nsteps, drift)."""
    dim = y0.shape[0]
    nprog = starts.shape[0] - 1
    vals = np.zeros(nprog)
    grads = np.zeros((nprog, n))
    hess = np.zeros((nprog, n, n))
    sv = np.zeros(depth + 1)
    sg = np.zeros((depth + 1, n))
    sh = np.zeros((depth + 1, n, n))
    R2 = radius * radius

    cap = 64
    ts = np.zeros(cap + 1)
    ys = np.zeros((cap + 1, dim))
    ks = np.zeros((cap, 7, dim))

    K = np.zeros((7, dim))
    ynew = np.zeros(dim)
    ytmp = np.zeros(dim)
    yprobe = np.zeros(dim)

    y = y0.copy()
    t = 0.0
    ts[0] = 0.0
    ys[0] = y
    nsteps = 0
    e0 = energy_at(y, n, ops, args, consts, starts, vals, grads, hess, sv, sg, sh)
    drift = abs(e0 - energy)

    code = rhs(y, n, nch, ops, args, consts, starts, energy, wmode, K[0], vals, grads, hess, sv, sg, sh)
    if code != 0:
        return STATUS_DOMAIN, 0.0, y, ts[:1], ys[:1], ks[:0], 0, drift

    speed = 0.0
    xv = 0.0
    xa = 0.0
    for i in range(n):
        speed += y[n + i] * y[n + i]
        xv += y[i] * y[n + i]
        xa += y[i] * K[0, n + i]
    speed = np.sqrt(speed)
    rho0 = rho_of(y, n, R2)
    on_boundary = abs(rho0) <= 1e-10 * R2
    if stop_at_exit and (rho0 < -1e-10 * R2 or (on_boundary and xv >= -1e-14 * radius * max(speed, 1.0))):
        # outside, or on the boundary pointing outward/tangentially: exit immediately
        return STATUS_EXIT, 0.0, y, ts[:1], ys[:1], ks[:0], 0, drift

    h = min(hmax, 0.05 * radius / max(speed, 1e-12))
    if on_boundary and stop_at_exit:
        denom = speed * speed + xa
        if denom > 0.0:
            tstar = -2.0 * xv / denom
            h = min(h, 0.5 * tstar)
    h = min(h, t_max)

    status = STATUS_TMAX
    t_exit = t_max
    y_exit = y.copy()
    while True:
        if t_max - t <= 1e-14 * (1.0 + abs(t)):
            status = STATUS_TMAX
            break
        if nsteps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        if h < 1e-14 * (1.0 + abs(t)):
            status = STATUS_UNDERFLOW
            break
        h = min(h, t_max - t)
        code = rk_step(y, h, n, nch, ops, args, consts, starts, energy, wmode, K, ynew, ytmp,
                       vals, grads, hess, sv, sg, sh)
        if code != 0:
            status = STATUS_DOMAIN
            break
        err = 0.0
        for q in range(dim):
            eq = 0.0
            for r in range(7):
                eq += E[r] * K[r, q]
            eq *= h
            sc = atol + rtol * max(abs(y[q]), abs(ynew[q]))
            err += (eq / sc) ** 2
        err = np.sqrt(err / dim)
        if not np.isfinite(err):
            h *= 0.2
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        # accepted: look for the boundary crossing inside [t, t + h]
        crossed = False
        s_lo = 0.0
        s_hi = 1.0
        if stop_at_exit:
            prev = 0.0
            for j in range(1, 9):
                s = j / 8.0
                if j == 8:
                    rj = rho_of(ynew, n, R2)
                else:
                    dense_eval(y, K, h, s, yprobe)
                    rj = rho_of(yprobe, n, R2)
                if rj < 0.0:
                    crossed = True
                    s_lo = prev
                    s_hi = s
                    break
                if rj > 0.0:
                    prev = s
        if crossed:
            # regula falsi (Illinois) on the dense interpolant
            dense_eval(y, K, h, s_lo, yprobe)
            f_lo = rho_of(yprobe, n, R2)
            dense_eval(y, K, h, s_hi, yprobe)
            f_hi = rho_of(yprobe, n, R2)
            side = 0
            s_mid = s_hi
            for _it in range(200):
                if f_hi != f_lo:
                    s_mid = s_hi - f_hi * (s_hi - s_lo) / (f_hi - f_lo)
                else:
                    s_mid = 0.5 * (s_lo + s_hi)
                if not (s_lo < s_mid < s_hi):
                    s_mid = 0.5 * (s_lo + s_hi)
                dense_eval(y, K, h, s_mid, yprobe)
                f_mid = rho_of(yprobe, n, R2)
                if f_mid > 0.0:
                    s_lo = s_mid
                    f_lo = f_mid
                    if side == -1:
                        f_hi *= 0.5
                    side = -1
                else:
                    s_hi = s_mid
                    f_hi = f_mid
                    if side == 1:
                        f_lo *= 0.5
                    side = 1
                if (s_hi - s_lo) * h <= 1e-13 * (1.0 + t):
                    break
            hr = 0.5 * (s_lo + s_hi) * h
            # polish with true RK steps from the step start (Newton on rho)
            K0 = K[0].copy()
            Kp = np.zeros((7, dim))
            for _it in range(3):
                Kp[0] = K0
                code = rk_step(y, hr, n, nch, ops, args, consts, starts, energy, wmode, Kp, ytmp, yprobe,
                               vals, grads, hess, sv, sg, sh)
                if code != 0:
                    break
                r_ = rho_of(ytmp, n, R2)
                dr = 0.0
                for i in range(n):
                    dr -= 2.0 * ytmp[i] * ytmp[n + i]
                if dr >= 0.0:
                    break
                dh = -r_ / dr
                hr = hr + dh
                if abs(dh) <= 1e-14 * (1.0 + t):
                    break
            Kp[0] = K0
            code = rk_step(y, hr, n, nch, ops, args, consts, starts, energy, wmode, Kp, ytmp, yprobe,
                           vals, grads, hess, sv, sg, sh)
            if nsteps >= cap:
                ts, ys, ks, cap = _grow(ts, ys, ks, cap)
            ks[nsteps] = Kp
            nsteps += 1
            ts[nsteps] = t + hr
            ys[nsteps] = ytmp
            e1 = energy_at(ytmp, n, ops, args, consts, starts, vals, grads, hess, sv, sg, sh)
            drift = max(drift, abs(e1 - energy))
            status = STATUS_EXIT
            t_exit = t + hr
            y_exit = ytmp.copy()
            break
        if nsteps >= cap:
            ts, ys, ks, cap = _grow(ts, ys, ks, cap)
        ks[nsteps] = K
        nsteps += 1
        t = t + h
        ts[nsteps] = t
        y[:] = ynew
        ys[nsteps] = y
        e1 = energy_at(y, n, ops, args, consts, starts, vals, grads, hess, sv, sg, sh)
        drift = max(drift, abs(e1 - energy))
        # FSAL: stage 7 is f at the new point
        K[0] = K[6]
        fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
        h = min(h * fac, hmax)
    if status != STATUS_EXIT:
        t_exit = t
        y_exit = y.copy()
    return status, t_exit, y_exit, ts[:nsteps + 1].copy(), ys[:nsteps + 1].copy(), ks[:nsteps].copy(), nsteps, drift


@numba.njit(cache=True)
def _grow(ts, ys, ks, cap):
    ncap = cap * 2
    ts2 = np.zeros(ncap + 1)
    ys2 = np.zeros((ncap + 1, ys.shape[1]))
    ks2 = np.zeros((ncap, 7, ks.shape[2]))
    ts2[:cap + 1] = ts
    ys2[:cap + 1] = ys
    ks2[:cap] = ks
    return ts2, ys2, ks2, ncap
