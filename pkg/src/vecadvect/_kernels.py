"""Numba kernels: counter-based normals, mode-table evaluation, flow steps, path drivers.

Rotation kind codes: 0 identity, 1 planar same-law, 2 planar rotated Brownian,
3 block rotation about axis 3, 4 exp of hat(a).
"""
import math

import numba as nb
import numpy as np

IDENTITY, ROT2D_SAME, ROT2D_BROWNIAN, ROT3D_BLOCK, ROT3D_EXP = 0, 1, 2, 3, 4
W_CURVE, W_SURFACE, W_VALUE = 0, 1, 2
DET_LO, DET_HI = 1e-6, 1e6

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SH = np.uint64(32)


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block; all arguments are uint64 holding 32-bit words."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SH
        lo0 = p0 & _MASK
        hi1 = p1 >> _SH
        lo1 = p1 & _MASK
        n0 = (hi1 ^ c1 ^ k0) & _MASK
        n2 = (hi0 ^ c3 ^ k1) & _MASK
        c0, c1, c2, c3 = n0, lo1, n2, lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(cache=True)
def _u01(w):
    return (np.float64(w) + 0.5) * 2.3283064365386963e-10


@nb.njit(cache=True)
def normals4(seed, step, path, stream, tag, out):
    k0 = np.uint64(seed) & _MASK
    k1 = np.uint64(seed) >> _SH
    r0, r1, r2, r3 = philox4x32(np.uint64(step) & _MASK, np.uint64(path) & _MASK,
                                np.uint64(stream) & _MASK, np.uint64(tag) & _MASK, k0, k1)
    a = math.sqrt(-2.0 * math.log(_u01(r0)))
    b = 2.0 * math.pi * _u01(r1)
    out[0] = a * math.cos(b)
    out[1] = a * math.sin(b)
    a = math.sqrt(-2.0 * math.log(_u01(r2)))
    b = 2.0 * math.pi * _u01(r3)
    out[2] = a * math.cos(b)
    out[3] = a * math.sin(b)


@nb.njit(cache=True)
def increments(seed, step, refine, path, stream, z, buf):
    """Standard normal vector for a coarse step built from `refine` fine draws."""
    d = z.shape[0]
    for i in range(d):
        z[i] = 0.0
    for q in range(refine):
        normals4(seed, step * refine + q, path, stream, 0, buf)
        for i in range(d):
            z[i] += buf[i]
    if refine > 1:
        s = 1.0 / math.sqrt(refine)
        for i in range(d):
            z[i] *= s


@nb.njit(cache=True)
def normals_block(seed, n, path, stream, tag):
    out = np.empty((n, 4))
    buf = np.empty(4)
    for i in range(n):
        normals4(seed, i, path, stream, tag, buf)
        out[i] = buf
    return out


# mode-table evaluation, batched over the rows of X

@nb.njit(cache=True)
def _bracket(times, t):
    S = times.shape[0]
    if S == 1 or t <= times[0]:
        return 0, 0.0
    if t >= times[S - 1]:
        return S - 2, 1.0
    lo = 0
    hi = S - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if times[mid] <= t:
            lo = mid
        else:
            hi = mid
    return lo, (t - times[lo]) / (times[lo + 1] - times[lo])


@nb.njit(cache=True)
def eval_batch(times, idx, coef, tw, kmax, X, nq, t, val, grad, want_grad, pw):
    """val[q] (and grad[q], [c, a] = d_a f_c) at X[q] for q < nq; pw is (B, d, km) scratch."""
    i0, w1 = _bracket(times, t)
    d = X.shape[1]
    C = coef.shape[2]
    M = idx.shape[0]
    for q in range(nq):
        for a in range(d):
            th = tw[a] * X[q, a]
            base = complex(math.cos(th), math.sin(th))
            pw[q, a, 0] = 1.0
            for m in range(1, kmax[a] + 1):
                pw[q, a, m] = pw[q, a, m - 1] * base
        for c in range(C):
            val[q, c] = 0.0
            if want_grad:
                for a in range(d):
                    grad[q, c, a] = 0.0
        for j in range(M):
            e = complex(1.0, 0.0)
            for a in range(d):
                m = idx[j, a]
                if m >= 0:
                    e = e * pw[q, a, m]
                else:
                    e = e * pw[q, a, -m].conjugate()
            for c in range(C):
                co = coef[i0, j, c]
                if w1 != 0.0:
                    co = (1.0 - w1) * co + w1 * coef[i0 + 1, j, c]
                zz = co * e
                val[q, c] += zz.real
                if want_grad:
                    for a in range(d):
                        grad[q, c, a] -= zz.imag * tw[a] * idx[j, a]


@nb.njit(cache=True)
def _km(kmax):
    km = 1
    for a in range(kmax.shape[0]):
        km = max(km, kmax[a] + 1)
    return km


@nb.njit(cache=True)
def eval_points(times, idx, coef, tw, kmax, pts, t, want_grad):
    P = pts.shape[0]
    d = pts.shape[1]
    C = coef.shape[2]
    val = np.zeros((P, C))
    grad = np.zeros((P, C, d))
    B = 256
    pw = np.empty((B, d, _km(kmax)), dtype=np.complex128)
    for p0 in range(0, P, B):
        nq = min(B, P - p0)
        eval_batch(times, idx, coef, tw, kmax, pts[p0:p0 + nq], nq, t, val[p0:p0 + nq], grad[p0:p0 + nq],
                   want_grad, pw)
    return val, grad


# so(3) helpers

@nb.njit(cache=True)
def rodrigues(a, R):
    th2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
    th = math.sqrt(th2)
    if th < 1e-8:
        s1 = 1.0 - th2 / 6.0 + th2 * th2 / 120.0 - th2 * th2 * th2 / 5040.0
        s2 = 0.5 - th2 / 24.0 + th2 * th2 / 720.0 - th2 * th2 * th2 / 40320.0
    else:
        s1 = math.sin(th) / th
        s2 = 2.0 * math.sin(0.5 * th) ** 2 / th2
    x, y, z = a[0], a[1], a[2]
    R[0, 0] = 1.0 + s2 * (-y * y - z * z)
    R[0, 1] = -s1 * z + s2 * x * y
    R[0, 2] = s1 * y + s2 * x * z
    R[1, 0] = s1 * z + s2 * x * y
    R[1, 1] = 1.0 + s2 * (-x * x - z * z)
    R[1, 2] = -s1 * x + s2 * y * z
    R[2, 0] = -s1 * y + s2 * x * z
    R[2, 1] = s1 * x + s2 * y * z
    R[2, 2] = 1.0 + s2 * (-x * x - y * y)


@nb.njit(cache=True)
def correction_vec(a, da, out):
    """vee(exp(hat a)^T d exp(hat a)) for the directional derivative da of a."""
    th2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
    th = math.sqrt(th2)
    if th < 1e-6:
        # right Jacobian series: da - c1 a x da + c2 a x (a x da)
        c1 = 0.5 - th2 / 24.0 + th2 * th2 / 720.0 - th2 * th2 * th2 / 40320.0
        c2 = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0 - th2 * th2 * th2 / 362880.0
        x0 = a[1] * da[2] - a[2] * da[1]
        x1 = a[2] * da[0] - a[0] * da[2]
        x2 = a[0] * da[1] - a[1] * da[0]
        y0 = a[1] * x2 - a[2] * x1
        y1 = a[2] * x0 - a[0] * x2
        y2 = a[0] * x1 - a[1] * x0
        out[0] = da[0] - c1 * x0 + c2 * y0
        out[1] = da[1] - c1 * x1 + c2 * y1
        out[2] = da[2] - c1 * x2 + c2 * y2
        return
    b0 = a[0] / th
    b1 = a[1] / th
    b2 = a[2] / th
    dth = b0 * da[0] + b1 * da[1] + b2 * da[2]
    db0 = (da[0] - b0 * dth) / th
    db1 = (da[1] - b1 * dth) / th
    db2 = (da[2] - b2 * dth) / th
    s = math.sin(th)
    omc = 2.0 * math.sin(0.5 * th) ** 2
    out[0] = s * db0 + dth * b0 - omc * (b1 * db2 - b2 * db1)
    out[1] = s * db1 + dth * b1 - omc * (b2 * db0 - b0 * db2)
    out[2] = s * db2 + dth * b2 - omc * (b0 * db1 - b1 * db0)


@nb.njit(cache=True)
def psi_eval(kind, c, s):
    if kind == 0:
        return c * s, c
    return math.atan(c * s), c / (1.0 + (c * s) ** 2)


# one Euler-Maruyama step for a batch of points

@nb.njit(cache=True)
def make_ws(B, d, km):
    return (np.empty((B, d, km), dtype=np.complex128), np.empty((B, d)), np.empty((B, d, d)),
            np.empty((B, 3)), np.empty((B, 3, 3)), np.empty(3), np.empty(3), np.empty(3),
            np.empty((3, 3)), np.empty((3, 3)), np.empty(3), np.empty((d, d)))


@nb.njit(cache=True)
def advance(kind, X, J, Z, nq, t, dt, nu, kappa, psi_kind, psi_c,
            dft, didx, dcoef, dtw, dkmax, has_drift,
            rft, ridx, rcoef, rtw, rkmax,
            want_J, ws):
    """In-place update of X[q] (d,) and J[q] (d, d) with standard normals Z[q], q < nq."""
    d = X.shape[1]
    pw, vv, vg, rv, rg, e, dX, tmp, R, ck, dak, JN = ws
    sq = math.sqrt(dt)
    s2n = math.sqrt(2.0 * nu)
    if has_drift:
        eval_batch(dft, didx, dcoef, dtw, dkmax, X, nq, t, vv, vg, want_J, pw)
    else:
        for q in range(nq):
            for i in range(d):
                vv[q, i] = 0.0
                for k in range(d):
                    vg[q, i, k] = 0.0
    planar = kind == ROT2D_SAME or kind == ROT3D_BLOCK or kind == ROT2D_BROWNIAN
    if kind != IDENTITY:
        eval_batch(rft, ridx, rcoef, rtw, rkmax, X, nq, t, rv, rg, want_J, pw)
    for q in range(nq):
        for i in range(d):
            e[i] = Z[q, i] * sq
        gphi0 = 0.0
        gphi1 = 0.0
        gphi2 = 0.0
        if planar:
            if kind == ROT2D_BROWNIAN:
                ang = kappa * rv[q, 0]
                fac = kappa
            else:
                ang, fac = psi_eval(psi_kind, psi_c, rv[q, 0])
            if want_J:
                gphi0 = fac * rg[q, 0, 0]
                gphi1 = fac * rg[q, 0, 1]
                if d == 3:
                    gphi2 = fac * rg[q, 0, 2]
            ca = math.cos(ang)
            sa = math.sin(ang)
            e0 = ca * e[0] - sa * e[1]
            e1 = sa * e[0] + ca * e[1]
            e[0] = e0
            e[1] = e1
        elif kind == ROT3D_EXP:
            for i in range(3):
                tmp[i] = rv[q, i]
            rodrigues(tmp, R)
            if want_J:
                # ck[k] = R (c_k x dW) with c_k = vee(R^T d_k R)
                for k in range(3):
                    for i in range(3):
                        dak[i] = rg[q, i, k]
                    correction_vec(tmp, dak, dX)
                    c0 = dX[1] * e[2] - dX[2] * e[1]
                    c1 = dX[2] * e[0] - dX[0] * e[2]
                    c2 = dX[0] * e[1] - dX[1] * e[0]
                    for i in range(3):
                        ck[k, i] = R[i, 0] * c0 + R[i, 1] * c1 + R[i, 2] * c2
            for i in range(3):
                dX[i] = R[i, 0] * e[0] + R[i, 1] * e[1] + R[i, 2] * e[2]
            for i in range(3):
                e[i] = dX[i]
        for i in range(d):
            dX[i] = vv[q, i] * dt + s2n * e[i]
        if want_J:
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc += vg[q, i, k] * J[q, k, j]
                    JN[i, j] = J[q, i, j] + acc * dt
            if planar:
                if kind == ROT2D_BROWNIAN:
                    r0 = -dX[1]
                    r1 = dX[0]
                else:
                    r0 = -s2n * e[1]
                    r1 = s2n * e[0]
                for j in range(d):
                    gj = gphi0 * J[q, 0, j] + gphi1 * J[q, 1, j]
                    if d == 3:
                        gj += gphi2 * J[q, 2, j]
                    JN[0, j] += r0 * gj
                    JN[1, j] += r1 * gj
            elif kind == ROT3D_EXP:
                for i in range(3):
                    for j in range(3):
                        acc = 0.0
                        for k in range(3):
                            acc += ck[k, i] * J[q, k, j]
                        JN[i, j] += s2n * acc
            for i in range(d):
                for j in range(d):
                    J[q, i, j] = JN[i, j]
        for i in range(d):
            X[q, i] += dX[i]


@nb.njit(cache=True)
def det(J):
    d = J.shape[0]
    if d == 2:
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return (J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
            - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
            + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0]))


@nb.njit(cache=True)
def cofactor(J, out):
    """out[i, j] = cofactor of entry (i, j), i.e. det(J) * inv(J)^T."""
    d = J.shape[0]
    if d == 2:
        out[0, 0] = J[1, 1]
        out[0, 1] = -J[1, 0]
        out[1, 0] = -J[0, 1]
        out[1, 1] = J[0, 0]
        return
    for i in range(3):
        i1 = (i + 1) % 3
        i2 = (i + 2) % 3
        for j in range(3):
            j1 = (j + 1) % 3
            j2 = (j + 2) % 3
            out[i, j] = J[i1, j1] * J[i2, j2] - J[i1, j2] * J[i2, j1]


@nb.njit(cache=True)
def _weight(mode, J, fv, w, cof):
    d = J.shape[0]
    if mode == W_VALUE:
        for j in range(d):
            w[j] = fv[j]
    elif mode == W_CURVE:
        for j in range(d):
            acc = 0.0
            for i in range(d):
                acc += fv[i] * J[i, j]
            w[j] = acc
    else:
        cofactor(J, cof)
        for j in range(d):
            acc = 0.0
            for i in range(d):
                acc += fv[i] * cof[i, j]
            w[j] = acc


BATCH = 64


@nb.njit(cache=True, parallel=True)
def run_nodes(points, n_paths, path_offset, streams, seed, t0, n_steps, dt, refine, nu,
              kind, kappa, psi_kind, psi_c,
              dft, didx, dcoef, dtw, dkmax, has_drift,
              rft, ridx, rcoef, rtw, rkmax,
              fft_, fidx, fcoef, ftw, fkmax, weight_mode):
    """Independent path batch per point; returns per-point sums, sums of squares, flags."""
    P = points.shape[0]
    d = points.shape[1]
    C = fcoef.shape[2]
    sums = np.zeros((P, C))
    sumsq = np.zeros((P, C))
    flagged = np.zeros(P, dtype=np.int64)
    km = max(_km(dkmax), _km(rkmax), _km(fkmax))
    want_J = weight_mode != W_VALUE
    for p in nb.prange(P):
        ws = make_ws(BATCH, d, km)
        X = np.empty((BATCH, d))
        J = np.empty((BATCH, d, d))
        Z = np.empty((BATCH, d))
        buf = np.empty(4)
        fv = np.empty((BATCH, C))
        fg = np.empty((BATCH, C, d))
        w = np.empty(C)
        cof = np.empty((d, d))
        for q0 in range(0, n_paths, BATCH):
            nq = min(BATCH, n_paths - q0)
            for q in range(nq):
                for i in range(d):
                    X[q, i] = points[p, i]
                    for j in range(d):
                        J[q, i, j] = 1.0 if i == j else 0.0
            t = t0
            for n in range(n_steps):
                for q in range(nq):
                    increments(seed, n, refine, path_offset + q0 + q, streams[p], Z[q], buf)
                advance(kind, X, J, Z, nq, t, dt, nu, kappa, psi_kind, psi_c,
                        dft, didx, dcoef, dtw, dkmax, has_drift,
                        rft, ridx, rcoef, rtw, rkmax, want_J, ws)
                t += dt
            eval_batch(fft_, fidx, fcoef, ftw, fkmax, X, nq, 0.0, fv, fg, False, ws[0])
            for q in range(nq):
                ok = True
                if want_J:
                    dj = det(J[q])
                    if not (abs(dj) >= DET_LO and abs(dj) <= DET_HI):
                        ok = False
                if ok:
                    _weight(weight_mode, J[q], fv[q], w, cof)
                    for c in range(C):
                        if not math.isfinite(w[c]):
                            ok = False
                if not ok:
                    flagged[p] += 1
                    continue
                for c in range(C):
                    sums[p, c] += w[c]
                    sumsq[p, c] += w[c] * w[c]
    return sums, sumsq, flagged


@nb.njit(cache=True, parallel=True)
def run_shared(points, n_paths, path_offset, stream, seed, t0, n_steps, dt, refine, nu,
               kind, kappa, psi_kind, psi_c,
               dft, didx, dcoef, dtw, dkmax, has_drift,
               rft, ridx, rcoef, rtw, rkmax,
               record, want_J):
    """All points of a path share its Wiener increments; records states at `record` steps."""
    P = points.shape[0]
    d = points.shape[1]
    R = record.shape[0]
    pos = np.empty((R, n_paths, P, d))
    grads = np.empty((R if want_J else 0, n_paths, P, d, d))
    km = max(_km(dkmax), _km(rkmax))
    for q in nb.prange(n_paths):
        ws = make_ws(P, d, km)
        z = np.empty(d)
        Z = np.empty((P, d))
        buf = np.empty(4)
        X = points.copy()
        Js = np.zeros((P, d, d))
        for p in range(P):
            for i in range(d):
                Js[p, i, i] = 1.0
        r = 0
        t = t0
        for n in range(n_steps + 1):
            while r < R and record[r] == n:
                pos[r, q] = X
                if want_J:
                    grads[r, q] = Js
                r += 1
            if n == n_steps:
                break
            increments(seed, n, refine, path_offset + q, stream, z, buf)
            for p in range(P):
                for i in range(d):
                    Z[p, i] = z[i]
            advance(kind, X, Js, Z, P, t, dt, nu, kappa, psi_kind, psi_c,
                    dft, didx, dcoef, dtw, dkmax, has_drift,
                    rft, ridx, rcoef, rtw, rkmax, want_J, ws)
            t += dt
    return pos, grads


@nb.njit(cache=True)
def _circulation(X, tt, fidx, fcoef, ftw, fkmax, t, mid, fv, fg, pw):
    P = X.shape[0]
    d = X.shape[1]
    for p in range(P):
        p1 = (p + 1) % P
        for i in range(d):
            mid[p, i] = 0.5 * (X[p, i] + X[p1, i])
    eval_batch(tt, fidx, fcoef, ftw, fkmax, mid, P, t, fv, fg, False, pw)
    total = 0.0
    for p in range(P):
        p1 = (p + 1) % P
        for i in range(d):
            total += fv[p, i] * (X[p1, i] - X[p, i])
    return total


@nb.njit(cache=True, parallel=True)
def run_contour(points, n_paths, path_offset, stream, seed, t0, n_steps, dt, refine, nu,
                kind, kappa, psi_kind, psi_c,
                dft, didx, dcoef, dtw, dkmax, has_drift,
                rft, ridx, rcoef, rtw, rkmax,
                checkpoints, ftimes, fidx, fcoef, ftw, fkmax):
    """Circulation of the snapshot field ftimes[c] along the transported contour at step checkpoints[c]."""
    P = points.shape[0]
    d = points.shape[1]
    NC = checkpoints.shape[0]
    out = np.empty((n_paths, NC))
    km = max(_km(dkmax), _km(rkmax), _km(fkmax))
    for q in nb.prange(n_paths):
        ws = make_ws(P, d, km)
        z = np.empty(d)
        Z = np.empty((P, d))
        buf = np.empty(4)
        mid = np.empty((P, d))
        fv = np.empty((P, d))
        fg = np.empty((P, d, d))
        X = points.copy()
        Jd = np.empty((P, d, d))
        c = 0
        t = t0
        for n in range(n_steps + 1):
            while c < NC and checkpoints[c] == n:
                out[q, c] = _circulation(X, ftimes, fidx, fcoef, ftw, fkmax, ftimes[c], mid, fv, fg, ws[0])
                c += 1
            if n == n_steps:
                break
            increments(seed, n, refine, path_offset + q, stream, z, buf)
            for p in range(P):
                for i in range(d):
                    Z[p, i] = z[i]
            advance(kind, X, Jd, Z, P, t, dt, nu, kappa, psi_kind, psi_c,
                    dft, didx, dcoef, dtw, dkmax, has_drift,
                    rft, ridx, rcoef, rtw, rkmax, False, ws)
            t += dt
    return out


@nb.njit(cache=True)
def run_complex(points, n_paths, path_offset, streams, seed, t0, n_steps, dt, refine, nu, kappa,
                rft, ridx, rcoef, rtw, rkmax, fft_, fidx, fcoef, ftw, fkmax):
    """Rotated-Brownian flow tracked both as a real Jacobian and as the Wirtinger pair (A, B).

    A = dZ/dzbar and B = dZbar/dzbar with Z = X1 + i X2, driven by
    dA = (kappa/2)(v B - conj(v) A) dZ and dB = (kappa/2)(conj(v) A - v B) conj(dZ).
    """
    P = points.shape[0]
    real_sums = np.zeros((P, 2))
    cplx_sums = np.zeros((P, 2))
    flagged = np.zeros(P, dtype=np.int64)
    max_state = 0.0
    max_weight = 0.0
    km = max(_km(rkmax), _km(fkmax))
    ws = make_ws(BATCH, 2, km)
    dft = np.zeros(1)
    didx = np.zeros((0, 2), dtype=np.int64)
    dcoef = np.zeros((1, 0, 2), dtype=np.complex128)
    dtw = np.ones(2)
    dkmax = np.zeros(2, dtype=np.int64)
    X = np.empty((BATCH, 2))
    X0 = np.empty((BATCH, 2))
    J = np.empty((BATCH, 2, 2))
    Z = np.empty((BATCH, 2))
    A = np.empty(BATCH, dtype=np.complex128)
    Bw = np.empty(BATCH, dtype=np.complex128)
    buf = np.empty(4)
    rv = np.empty((BATCH, 1))
    rg = np.empty((BATCH, 1, 2))
    fv = np.empty((BATCH, 2))
    fg = np.empty((BATCH, 2, 2))
    w = np.empty(2)
    cof = np.empty((2, 2))
    for p in range(P):
        for q0 in range(0, n_paths, BATCH):
            nq = min(BATCH, n_paths - q0)
            for q in range(nq):
                X[q, 0] = points[p, 0]
                X[q, 1] = points[p, 1]
                J[q, 0, 0] = 1.0
                J[q, 0, 1] = 0.0
                J[q, 1, 0] = 0.0
                J[q, 1, 1] = 1.0
                A[q] = 0.0
                Bw[q] = 1.0
            t = t0
            for n in range(n_steps):
                for q in range(nq):
                    increments(seed, n, refine, path_offset + q0 + q, streams[p], Z[q], buf)
                    X0[q, 0] = X[q, 0]
                    X0[q, 1] = X[q, 1]
                eval_batch(rft, ridx, rcoef, rtw, rkmax, X, nq, t, rv, rg, True, ws[0])
                advance(ROT2D_BROWNIAN, X, J, Z, nq, t, dt, nu, kappa, 0, 0.0,
                        dft, didx, dcoef, dtw, dkmax, False,
                        rft, ridx, rcoef, rtw, rkmax, True, ws)
                for q in range(nq):
                    vc = complex(-rg[q, 0, 1], rg[q, 0, 0])
                    dZ = complex(X[q, 0] - X0[q, 0], X[q, 1] - X0[q, 1])
                    a = A[q]
                    b = Bw[q]
                    A[q] = a + 0.5 * kappa * (vc * b - vc.conjugate() * a) * dZ
                    Bw[q] = b + 0.5 * kappa * (vc.conjugate() * a - vc * b) * dZ.conjugate()
                    Ar = 0.5 * complex(J[q, 0, 0] - J[q, 1, 1], J[q, 1, 0] + J[q, 0, 1])
                    Br = 0.5 * complex(J[q, 0, 0] + J[q, 1, 1], J[q, 0, 1] - J[q, 1, 0])
                    max_state = max(max_state, abs(Ar - A[q]), abs(Br - Bw[q]))
                t += dt
            eval_batch(fft_, fidx, fcoef, ftw, fkmax, X, nq, 0.0, fv, fg, False, ws[0])
            for q in range(nq):
                dj = det(J[q])
                if not (abs(dj) >= DET_LO and abs(dj) <= DET_HI):
                    flagged[p] += 1
                    continue
                _weight(W_CURVE, J[q], fv[q], w, cof)
                Fc = complex(fv[q, 0], fv[q, 1])
                Qc = Fc.conjugate() * A[q] + Fc * Bw[q]
                max_weight = max(max_weight, abs(Qc - complex(w[0], w[1])))
                real_sums[p, 0] += w[0]
                real_sums[p, 1] += w[1]
                cplx_sums[p, 0] += Qc.real
                cplx_sums[p, 1] += Qc.imag
    return real_sums, cplx_sums, flagged, max_state, max_weight


@nb.njit(cache=True)
def ensemble_normals(seed, step, refine, path_ids, stream, d):
    out = np.empty((path_ids.shape[0], d))
    z = np.empty(d)
    buf = np.empty(4)
    for q in range(path_ids.shape[0]):
        increments(seed, step, refine, path_ids[q], stream, z, buf)
        out[q] = z
    return out


@nb.njit(cache=True)
def step_points(X, J, Z, t, dt, nu, kind, kappa, psi_kind, psi_c,
                dft, didx, dcoef, dtw, dkmax, has_drift,
                rft, ridx, rcoef, rtw, rkmax, want_J):
    """One step for arrays X (Q, P, d), J (Q, P, d, d); path q uses normals Z[q]."""
    Q = X.shape[0]
    P = X.shape[1]
    d = X.shape[2]
    ws = make_ws(P, d, max(_km(dkmax), _km(rkmax)))
    Zp = np.empty((P, d))
    for q in range(Q):
        for p in range(P):
            for i in range(d):
                Zp[p, i] = Z[q, i]
        advance(kind, X[q], J[q], Zp, P, t, dt, nu, kappa, psi_kind, psi_c,
                dft, didx, dcoef, dtw, dkmax, has_drift,
                rft, ridx, rcoef, rtw, rkmax, want_J, ws)
