"""Per-family kernel template.

Never imported on its own: :func:`emsplit._kernels.build_kernels` prepends
bindings for ``total``, ``convex``, ``concave``, ``sup``, ``sub``,
``quotient``, ``has_quotient`` and ``CACHE`` and loads the result as a
separate module, so each family gets its own compiled (and cached) copy.
"""

import math

import numpy as np
from numba import njit

from emsplit._kernels import (
    EPS,
    KIND_LG,
    KIND_MP,
    RESCUE_GE,
    RESCUE_GONZALEZ,
    RESCUE_JANZ,
    RESCUE_PM,
    STATUS_DIVERGED,
    STATUS_OK,
    STATUS_SINGULAR,
    STATUS_TANGENT,
    segregated_increment,
)


@njit(nogil=True, cache=CACHE)
def formula(code, prm, d0, d1):
    # code: RESCUE_* numbering; GE/PM/PT share codes with KIND_*
    h = d1 - d0
    if code == RESCUE_JANZ:
        t = total(0.5 * (d0 + d1), prm)
        return t[1], 0.5 * t[2]
    if code == RESCUE_GONZALEZ:
        t = total(0.5 * (d0 + d1), prm)
        return (t[1] + h * h / 24.0 * t[3],
                0.5 * t[2] + h / 12.0 * t[3] + h * h / 48.0 * t[4])
    if code == RESCUE_GE:
        c = convex(d1, prm)
        e = concave(d0, prm)
        return c[1] + e[1], c[2]
    if code == RESCUE_PM:
        t = total(0.5 * (d0 + d1), prm)
        sp = sup(d1, prm)
        sm = sub(d0, prm)
        w = sp[3] + sm[3]
        return (t[1] + h * h / 24.0 * w,
                0.5 * t[2] + h / 12.0 * w + h * h / 24.0 * sp[4])
    t0 = total(d0, prm)
    t1 = total(d1, prm)
    sp = sup(d0, prm)
    sm = sub(d1, prm)
    w = sp[3] + sm[3]
    return (0.5 * (t0[1] + t1[1]) - h * h / 12.0 * w,
            0.5 * t1[2] - h / 6.0 * w - h * h / 12.0 * sm[4])


@njit(nogil=True, cache=CACHE)
def radial_lambda(kind, rescue, tol_q, closed, prm, d0, d1):
    """``(Lambda, dLambda/dd1, switched)`` for the distance-based kinds."""
    if kind == KIND_LG:
        if closed and has_quotient:
            lam, dl = quotient(d0, d1, prm)
            return lam, dl, False
        h = d1 - d0
        if abs(h) > tol_q:
            v0 = total(d0, prm)[0]
            t1 = total(d1, prm)
            lam = (t1[0] - v0) / h
            return lam, (t1[1] - lam) / h, False
        lam, dl = formula(rescue, prm, d0, d1)
        return lam, dl, True
    lam, dl = formula(kind, prm, d0, d1)
    return lam, dl, False


@njit(nogil=True, cache=CACHE)
def assemble(kind, rescue, tol_q, closed, dt, minv, pi, pj, prm, dmin,
             q0, p0, q1, p1, rq, rp, c, want_tangent):
    """Fill residuals (and tangent); return ``(switches, status, pair, distance)``."""
    n = q0.shape[0]
    for a in range(n):
        for k in range(3):
            s = 0.0
            for b in range(n):
                s += minv[a, b] * (p0[b, k] + p1[b, k])
            rq[a, k] = q1[a, k] - q0[a, k] - 0.5 * dt * s
            rp[a, k] = p1[a, k] - p0[a, k]
    if want_tangent:
        c[:, :] = 0.0
    u0 = np.empty(3)
    u1 = np.empty(3)
    xm = np.empty(3)
    grad = np.empty(3)
    switches = 0
    for e in range(pi.shape[0]):
        a = pi[e]
        b = pj[e]
        for k in range(3):
            if b >= 0:
                u0[k] = q0[a, k] - q0[b, k]
                u1[k] = q1[a, k] - q1[b, k]
            else:
                u0[k] = q0[a, k]
                u1[k] = q1[a, k]
            xm[k] = 0.5 * (u0[k] + u1[k])
        if kind == KIND_MP:
            dm = math.sqrt(xm[0] * xm[0] + xm[1] * xm[1] + xm[2] * xm[2])
            if not dm > dmin[e]:
                return switches, STATUS_SINGULAR, e, dm
            t = total(dm, prm[e])
            beta = t[1] / dm
            if want_tangent:
                g = (t[2] / dm - t[1] / (dm * dm)) * 0.5 / dm
                for k in range(3):
                    grad[k] = g * xm[k]
        else:
            d0 = math.sqrt(u0[0] * u0[0] + u0[1] * u0[1] + u0[2] * u0[2])
            d1 = math.sqrt(u1[0] * u1[0] + u1[1] * u1[1] + u1[2] * u1[2])
            if not d0 > dmin[e]:
                return switches, STATUS_SINGULAR, e, d0
            if not d1 > dmin[e]:
                return switches, STATUS_SINGULAR, e, d1
            lam, dl, sw = radial_lambda(kind, rescue, tol_q, closed, prm[e], d0, d1)
            if sw:
                switches += 1
            s = d0 + d1
            beta = 2.0 * lam / s
            if want_tangent:
                g = (2.0 * dl / s - 2.0 * lam / (s * s)) / d1
                for k in range(3):
                    grad[k] = g * u1[k]
        for k in range(3):
            f = dt * beta * xm[k]
            rp[a, k] += f
            if b >= 0:
                rp[b, k] -= f
        if want_tangent:
            for i in range(3):
                for j in range(3):
                    kij = dt * xm[i] * grad[j]
                    if i == j:
                        kij += 0.5 * dt * beta
                    c[3 * a + i, 3 * a + j] += kij
                    if b >= 0:
                        c[3 * a + i, 3 * b + j] -= kij
                        c[3 * b + i, 3 * a + j] -= kij
                        c[3 * b + i, 3 * b + j] += kij
    return switches, STATUS_OK, -1, 0.0


@njit(nogil=True, cache=CACHE)
def residual_norm(rq, rp, scaled, dt, minv):
    """Euclidean norm of ``(R_q, R_p)``, or of ``(R_q, dt/2 Minv R_p)`` when scaled."""
    n = rq.shape[0]
    s = 0.0
    for a in range(n):
        for k in range(3):
            if scaled:
                w = 0.0
                for b in range(n):
                    w += minv[a, b] * rp[b, k]
                w *= 0.5 * dt
            else:
                w = rp[a, k]
            s += rq[a, k] * rq[a, k] + w * w
    return math.sqrt(s)


@njit(nogil=True, cache=CACHE)
def advance(kind, rescue, tol_q, closed, tol_r, tol_a, floor, scaled, lagged, lmax, dt, minv,
            mass, pi, pj, prm, dmin, q0, p0, q1, p1, rq, rp, c, a, x, dq, dp):
    """Predictor multi-corrector step from ``(q0, p0)`` into ``(q1, p1)``.

    The absolute test uses ``max(tol_a, floor * eps * |(q1, p1)|)``, with
    momenta weighted like the residual when ``scaled``. With ``lagged`` the
    iterate is accepted one correction after the residual first passes
    (never exceeding ``lmax`` corrections).

    Returns ``(iterations, r_initial, r_final, converged, switches,
    status, pair, distance)``.
    """
    q1[:, :] = q0
    p1[:, :] = p0
    it = 0
    sw = 0
    r0 = 0.0
    passed = False
    while True:
        s, status, bad, dist = assemble(kind, rescue, tol_q, closed, dt, minv, pi, pj,
                                        prm, dmin, q0, p0, q1, p1, rq, rp, c, True)
        sw += s
        if status != STATUS_OK:
            return it, r0, np.nan, False, sw, status, bad, dist
        r = residual_norm(rq, rp, scaled, dt, minv)
        if it == 0:
            r0 = r
        if not math.isfinite(r):
            return it, r0, r, False, sw, STATUS_DIVERGED, -1, 0.0
        tol = tol_a
        if floor > 0.0:
            tol = max(tol_a, floor * EPS * residual_norm(q1, p1, scaled, dt, minv))
        if passed or r <= tol or (it > 0 and r <= tol_r * r0):
            if passed or not lagged or it >= lmax:
                return it, r0, r, True, sw, STATUS_OK, -1, 0.0
            passed = True
        if it >= lmax:
            return it, r0, r, False, sw, STATUS_DIVERGED, -1, 0.0
        if not segregated_increment(dt, minv, mass, c, rq, rp, a, x, dq, dp):
            return it, r0, r, False, sw, STATUS_TANGENT, -1, 0.0
        for i in range(q1.shape[0]):
            for k in range(3):
                q1[i, k] += dq[i, k]
                p1[i, k] += dp[i, k]
        it += 1


@njit(nogil=True, cache=CACHE)
def energy(minv, pi, pj, prm, q, p):
    n = q.shape[0]
    kin = 0.0
    for a in range(n):
        for b in range(n):
            kin += minv[a, b] * (p[a, 0] * p[b, 0] + p[a, 1] * p[b, 1] + p[a, 2] * p[b, 2])
    pot = 0.0
    for e in range(pi.shape[0]):
        i = pi[e]
        j = pj[e]
        s = 0.0
        for k in range(3):
            d = q[i, k] - q[j, k] if j >= 0 else q[i, k]
            s += d * d
        pot += total(math.sqrt(s), prm[e])[0]
    return 0.5 * kin + pot


@njit(nogil=True, cache=CACHE)
def run(kind, rescue, tol_q, closed, tol_r, tol_a, floor, scaled, lagged, lmax, accept, minv,
        mass, pi, pj, prm, dmin, q_init, p_init, t0, dts, nsteps, stride, out_q, out_p, out_t,
        s_it, s_r0, s_r, s_conv, s_sw, s_dh, agg):
    """Integrate ``nsteps`` steps, sampling every ``stride`` and the last.

    ``dts`` has length ``nsteps`` or 1 (uniform step, times ``t0 + k dt``).
    ``agg`` (int64, 9) receives: samples written, steps done, status,
    failing pair, failing step, total iterations, max iterations, total
    switches, unconverged steps accepted. With ``accept`` a step that
    exhausts ``lmax`` with a finite residual keeps its last iterate. Returns
    the failing distance and the failed step's ``(iterations, r_initial,
    r_final)``.
    """
    n = q_init.shape[0]
    m = 3 * n
    qa = q_init.copy()
    pa = p_init.copy()
    qb = np.empty_like(qa)
    pb = np.empty_like(pa)
    rq = np.empty((n, 3))
    rp = np.empty((n, 3))
    c = np.empty((m, m))
    a = np.empty((m, m))
    x = np.empty(m)
    dq = np.empty((n, 3))
    dp = np.empty((n, 3))
    uniform = dts.shape[0] == 1
    out_q[0] = qa
    out_p[0] = pa
    out_t[0] = t0
    s_it[0] = 0
    s_r0[0] = 0.0
    s_r[0] = 0.0
    s_conv[0] = True
    s_sw[0] = 0
    s_dh[0] = 0.0
    ns = 1
    t = t0
    tot_it = 0
    max_it = 0
    tot_sw = 0
    unconv = 0
    for step in range(1, nsteps + 1):
        dt = dts[0] if uniform else dts[step - 1]
        sample = step % stride == 0 or step == nsteps
        h0 = energy(minv, pi, pj, prm, qa, pa) if sample else 0.0
        it, r0, r, conv, sw, status, bad, dist = advance(
            kind, rescue, tol_q, closed, tol_r, tol_a, floor, scaled, lagged, lmax, dt, minv, mass,
            pi, pj, prm, dmin, qa, pa, qb, pb, rq, rp, c, a, x, dq, dp)
        tot_it += it
        tot_sw += sw
        if it > max_it:
            max_it = it
        if not conv and accept and status == STATUS_DIVERGED and math.isfinite(r):
            unconv += 1
        elif not conv:
            agg[0] = ns
            agg[1] = step - 1
            agg[2] = status
            agg[3] = bad
            agg[4] = step
            agg[5] = tot_it
            agg[6] = max_it
            agg[7] = tot_sw
            agg[8] = unconv
            return dist, it, r0, r, sw
        if uniform:
            t = t0 + step * dt
        else:
            t += dt
        qa, qb = qb, qa
        pa, pb = pb, pa
        if sample:
            out_q[ns] = qa
            out_p[ns] = pa
            out_t[ns] = t
            s_it[ns] = it
            s_r0[ns] = r0
            s_r[ns] = r
            s_conv[ns] = conv
            s_sw[ns] = sw
            s_dh[ns] = energy(minv, pi, pj, prm, qa, pa) - h0
            ns += 1
    agg[0] = ns
    agg[1] = nsteps
    agg[2] = STATUS_OK
    agg[3] = -1
    agg[4] = -1
    agg[5] = tot_it
    agg[6] = max_it
    agg[7] = tot_sw
    agg[8] = unconv
    return 0.0, 0, 0.0, 0.0, 0
