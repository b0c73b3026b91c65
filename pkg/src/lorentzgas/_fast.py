"""Compiled inner loops for the Monte Carlo samplers.

Everything in this module is numba nopython code operating on scalars and
small preallocated arrays.  The public wrappers in curves.py, tails.py and
billiards.py do validation and bookkeeping; tests compare these kernels
against the reference enumeration in lattices.py.

Randomness: each sample index gets its own splitmix64 stream derived from
(seed, index), so results are bit-identical under any chunking of the index
range.  Uniform integers below a bound use rejection, not modulo, to keep
coset sampling exactly uniform even for bounds near 2^63.
"""

import math

import numpy as np
from numba import njit

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SEQ = np.uint64(0xD1342543DE82EF95)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix(x):
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def _stream(seed, index):
    return _mix((np.uint64(seed) + _GOLD) ^ _mix(np.uint64(index) * _SEQ + np.uint64(1)))


@njit(cache=True, inline="always")
def _next(state):
    state = state + _GOLD
    return state, _mix(state)


@njit(cache=True, inline="always")
def _u01(x):
    return (x >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _below(state, n):
    # Uniform int64 in [0, n) without modulo bias.
    un = np.uint64(n)
    lim = (np.uint64(0) - un) % un
    while True:
        state, x = _next(state)
        if x >= lim:
            return state, np.int64((x - lim) % un)


# ---------------------------------------------------------------------------
# Hecke coset representatives (must match lattices.HeckeCosets ordering)


@njit(cache=True)
def _hecke3(idx, p, T):
    for i in range(3):
        for j in range(3):
            T[i, j] = 0
    if idx == 0:
        T[0, 0] = p
        T[1, 1] = 1
        T[2, 2] = 1
    elif idx <= p:
        T[0, 0] = 1
        T[0, 1] = idx - 1
        T[1, 1] = p
        T[2, 2] = 1
    else:
        e = idx - 1 - p
        T[0, 0] = 1
        T[1, 1] = 1
        T[0, 2] = e // p
        T[1, 2] = e % p
        T[2, 2] = p


@njit(cache=True)
def _hecke2(idx, p, T):
    for i in range(2):
        for j in range(2):
            T[i, j] = 0
    if idx == 0:
        T[0, 0] = p
        T[1, 1] = 1
    else:
        T[0, 0] = 1
        T[0, 1] = idx - 1
        T[1, 1] = p


# ---------------------------------------------------------------------------
# Basis reduction


@njit(cache=True)
def _reduce_int(R, U):
    """Greedy pairwise row reduction of an integer basis, exact in int64.

    Updates R in place and tracks R = U @ R_original.  Row norms never
    increase (each step is accepted only on an exact strict decrease), so
    intermediate entries stay within the starting magnitude and the int64
    dot products below stay far from overflow for entries up to ~1.4e9.
    """
    n = R.shape[0]
    for _sweep in range(512):
        changed = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                dot = np.int64(0)
                nrm = np.int64(0)
                old = np.int64(0)
                for k in range(n):
                    dot += R[i, k] * R[j, k]
                    nrm += R[j, k] * R[j, k]
                    old += R[i, k] * R[i, k]
                if nrm == 0:
                    continue
                q = np.int64(round(dot / nrm))
                if q == 0:
                    continue
                new = old - 2 * q * dot + q * q * nrm
                if new < old:
                    for k in range(n):
                        R[i, k] -= q * R[j, k]
                        U[i, k] -= q * U[j, k]
                    changed = True
        if not changed:
            break


@njit(cache=True)
def _reduce_float3(B, U):
    """Greedy pairwise reduction of a 3x3 float row basis.

    U (int64, initialized to the identity by the caller) tracks the
    unimodular row operations so callers can locate specific original
    lattice points among the new coefficients exactly.
    """
    for _sweep in range(128):
        changed = False
        for i in range(3):
            for j in range(3):
                if i == j:
                    continue
                dot = B[i, 0] * B[j, 0] + B[i, 1] * B[j, 1] + B[i, 2] * B[j, 2]
                nrm = B[j, 0] * B[j, 0] + B[j, 1] * B[j, 1] + B[j, 2] * B[j, 2]
                if nrm <= 0.0:
                    continue
                q = round(dot / nrm)
                if q == 0.0:
                    continue
                old = B[i, 0] * B[i, 0] + B[i, 1] * B[i, 1] + B[i, 2] * B[i, 2]
                new = old - 2.0 * q * dot + q * q * nrm
                if new < old * (1.0 - 1e-12):
                    iq = np.int64(q)
                    B[i, 0] -= q * B[j, 0]
                    B[i, 1] -= q * B[j, 1]
                    B[i, 2] -= q * B[j, 2]
                    U[i, 0] -= iq * U[j, 0]
                    U[i, 1] -= iq * U[j, 1]
                    U[i, 2] -= iq * U[j, 2]
                    changed = True
        if not changed:
            break


@njit(cache=True, inline="always")
def _unimodular_inverse_row0(U):
    """First row of U^{-1} for an int64 unimodular U (exact)."""
    c00 = U[1, 1] * U[2, 2] - U[1, 2] * U[2, 1]
    c01 = -(U[1, 0] * U[2, 2] - U[1, 2] * U[2, 0])
    c02 = U[1, 0] * U[2, 1] - U[1, 1] * U[2, 0]
    c10 = -(U[0, 1] * U[2, 2] - U[0, 2] * U[2, 1])
    c20 = U[0, 1] * U[1, 2] - U[0, 2] * U[1, 1]
    det = U[0, 0] * c00 + U[0, 1] * c01 + U[0, 2] * c02
    return c00 * det, c10 * det, c20 * det


@njit(cache=True, inline="always")
def _inv3(B, out):
    a = B[0, 0]
    b = B[0, 1]
    c = B[0, 2]
    d = B[1, 0]
    e = B[1, 1]
    f = B[1, 2]
    g = B[2, 0]
    h = B[2, 1]
    i = B[2, 2]
    c00 = e * i - f * h
    c01 = -(d * i - f * g)
    c02 = d * h - e * g
    c10 = -(b * i - c * h)
    c11 = a * i - c * g
    c12 = -(a * h - b * g)
    c20 = b * f - c * e
    c21 = -(a * f - c * d)
    c22 = a * e - b * d
    det = a * c00 + b * c01 + c * c02
    out[0, 0] = c00 / det
    out[0, 1] = c10 / det
    out[0, 2] = c20 / det
    out[1, 0] = c01 / det
    out[1, 1] = c11 / det
    out[1, 2] = c21 / det
    out[2, 0] = c02 / det
    out[2, 2] = c22 / det
    out[2, 1] = c12 / det


# ---------------------------------------------------------------------------
# Tube (cylinder along the first axis) scans


@njit(cache=True, inline="always")
def _tube_ranges(B, inv, ox, oy, oz, x1lo, x1hi, cx, cy, rad):
    """Integer coefficient bounds covering the box of a transverse-disc tube."""
    c0lo = 1e300
    c0hi = -1e300
    c1lo = 1e300
    c1hi = -1e300
    c2lo = 1e300
    c2hi = -1e300
    for corner in range(8):
        wx = (x1hi if corner & 1 else x1lo) - ox
        wy = (cx + rad if corner & 2 else cx - rad) - oy
        wz = (cy + rad if corner & 4 else cy - rad) - oz
        q0 = wx * inv[0, 0] + wy * inv[1, 0] + wz * inv[2, 0]
        q1 = wx * inv[0, 1] + wy * inv[1, 1] + wz * inv[2, 1]
        q2 = wx * inv[0, 2] + wy * inv[1, 2] + wz * inv[2, 2]
        c0lo = min(c0lo, q0)
        c0hi = max(c0hi, q0)
        c1lo = min(c1lo, q1)
        c1hi = max(c1hi, q1)
        c2lo = min(c2lo, q2)
        c2hi = max(c2hi, q2)
    eps = 1e-9
    a0 = np.int64(math.ceil(c0lo - eps))
    b0 = np.int64(math.floor(c0hi + eps))
    a1 = np.int64(math.ceil(c1lo - eps))
    b1 = np.int64(math.floor(c1hi + eps))
    a2 = np.int64(math.ceil(c2lo - eps))
    b2 = np.int64(math.floor(c2hi + eps))
    return a0, b0, a1, b1, a2, b2


@njit(cache=True)
def _tube_min_alpha(B, inv, ox, oy, oz, cap):
    """Least first coordinate of an offset lattice point in the unit tube.

    Scans o + c@B over the coefficient box of {0 < x1 <= cap, |x_perp| < 1}
    and returns the minimum x1, or +inf when the tube slab is empty.
    """
    _inv3(B, inv)
    a0, b0, a1, b1, a2, b2 = _tube_ranges(B, inv, ox, oy, oz, 0.0, cap, 0.0, 0.0, 1.0)
    best = np.inf
    for c0 in range(a0, b0 + 1):
        y0x = ox + c0 * B[0, 0]
        y0y = oy + c0 * B[0, 1]
        y0z = oz + c0 * B[0, 2]
        for c1 in range(a1, b1 + 1):
            y1x = y0x + c1 * B[1, 0]
            y1y = y0y + c1 * B[1, 1]
            y1z = y0z + c1 * B[1, 2]
            # Direct (not incremental) evaluation so that zero coefficients
            # give exact zeros and the open boundary at x1 = 0 holds.
            for c2 in range(a2, b2 + 1):
                yx = y1x + c2 * B[2, 0]
                if 0.0 < yx < best:
                    yy = y1y + c2 * B[2, 1]
                    yz = y1z + c2 * B[2, 2]
                    if yy * yy + yz * yz < 1.0:
                        best = yx
    if best > cap:
        return np.inf
    return best


@njit(cache=True)
def _tube_hit_open(B, inv, x1max, cx, cy, rad, ey0, ey1, ey2):
    """True when the lattice spanned by B meets the open cylinder
    {0 < x1 < x1max, |x_perp - (cx,cy)| < rad}.

    (ey0, ey1, ey2) names the coefficient vector of a lattice point known to
    sit exactly on the x1 = x1max face; it and the origin are boundary
    points, so both are excluded by coefficient identity instead of by a
    float comparison that rounding could tip either way.
    """
    _inv3(B, inv)
    a0, b0, a1, b1, a2, b2 = _tube_ranges(B, inv, 0.0, 0.0, 0.0, 0.0, x1max, cx, cy, rad)
    r2 = rad * rad
    for c0 in range(a0, b0 + 1):
        y0x = c0 * B[0, 0]
        y0y = c0 * B[0, 1]
        y0z = c0 * B[0, 2]
        for c1 in range(a1, b1 + 1):
            y1x = y0x + c1 * B[1, 0]
            y1y = y0y + c1 * B[1, 1]
            y1z = y0z + c1 * B[1, 2]
            for c2 in range(a2, b2 + 1):
                if c0 == 0 and c1 == 0 and c2 == 0:
                    continue
                if c0 == ey0 and c1 == ey1 and c2 == ey2:
                    continue
                yx = y1x + c2 * B[2, 0]
                if 0.0 < yx < x1max:
                    yy = y1y + c2 * B[2, 1]
                    yz = y1z + c2 * B[2, 2]
                    dy = yy - cx
                    dz = yz - cy
                    if dy * dy + dz * dz < r2:
                        return True
    return False


# ---------------------------------------------------------------------------
# Curve samplers


@njit(cache=True)
def phi_hist_full(p, idx_lo, idx_hi, kmat, x0, m, delta, nbins, cap):
    """Folded full-enumeration pass for the generic-start curve.

    For every coset index in [idx_lo, idx_hi) the m^3 torus shifts are
    handled in a single enumeration of the m-times-finer affine lattice;
    each fine point is routed to its shift id through the tracked unimodular
    factor, reduced mod m.  Returns (bin counts, censored count, max path).
    """
    hist = np.zeros(nbins, dtype=np.int64)
    censored = np.int64(0)
    amax = 0.0
    m3 = m * m * m
    amin = np.full(m3, np.inf)
    T = np.zeros((3, 3), dtype=np.int64)
    R = np.zeros((3, 3), dtype=np.int64)
    U = np.zeros((3, 3), dtype=np.int64)
    Um = np.zeros((3, 3), dtype=np.int64)
    Bf = np.zeros((3, 3))
    inv = np.zeros((3, 3))
    scale = float(p) ** (-1.0 / 3.0)
    for idx in range(idx_lo, idx_hi):
        _hecke3(idx, p, T)
        for i in range(3):
            for j in range(3):
                R[i, j] = T[i, j]
                U[i, j] = np.int64(1) if i == j else np.int64(0)
        _reduce_int(R, U)
        s = scale / m
        for i in range(3):
            for j in range(3):
                Bf[i, j] = s * (
                    R[i, 0] * kmat[0, j] + R[i, 1] * kmat[1, j] + R[i, 2] * kmat[2, j]
                )
        #

        tx = x0[0] * T[0, 0] + x0[1] * T[1, 0] + x0[2] * T[2, 0]
        ty = x0[0] * T[0, 1] + x0[1] * T[1, 1] + x0[2] * T[2, 1]
        tz = x0[0] * T[0, 2] + x0[1] * T[1, 2] + x0[2] * T[2, 2]
        ox = scale * (tx * kmat[0, 0] + ty * kmat[1, 0] + tz * kmat[2, 0])
        oy = scale * (tx * kmat[0, 1] + ty * kmat[1, 1] + tz * kmat[2, 1])
        oz = scale * (tx * kmat[0, 2] + ty * kmat[1, 2] + tz * kmat[2, 2])
        _inv3(Bf, inv)
        # Recenter the offset on the fine lattice so the scan coefficients
        # stay small; the subtracted integer vector feeds the shift ids.
        q0 = np.int64(round(ox * inv[0, 0] + oy * inv[1, 0] + oz * inv[2, 0]))
        q1 = np.int64(round(ox * inv[0, 1] + oy * inv[1, 1] + oz * inv[2, 1]))
        q2 = np.int64(round(ox * inv[0, 2] + oy * inv[1, 2] + oz * inv[2, 2]))
        ox -= q0 * Bf[0, 0] + q1 * Bf[1, 0] + q2 * Bf[2, 0]
        oy -= q0 * Bf[0, 1] + q1 * Bf[1, 1] + q2 * Bf[2, 1]
        oz -= q0 * Bf[0, 2] + q1 * Bf[1, 2] + q2 * Bf[2, 2]
        b0x = (-(q0 * U[0, 0] + q1 * U[1, 0] + q2 * U[2, 0])) % m
        b0y = (-(q0 * U[0, 1] + q1 * U[1, 1] + q2 * U[2, 1])) % m
        b0z = (-(q0 * U[0, 2] + q1 * U[1, 2] + q2 * U[2, 2])) % m
        for i in range(3):
            for j in range(3):
                Um[i, j] = U[i, j] % m
        a0, b0, a1, b1, a2, b2 = _tube_ranges(
            Bf, inv, ox, oy, oz, 0.0, cap, 0.0, 0.0, 1.0
        )
        for c0 in range(a0, b0 + 1):
            y0x = ox + c0 * Bf[0, 0]
            y0y = oy + c0 * Bf[0, 1]
            y0z = oz + c0 * Bf[0, 2]
            n0x = (b0x + c0 * Um[0, 0]) % m
            n0y = (b0y + c0 * Um[0, 1]) % m
            n0z = (b0z + c0 * Um[0, 2]) % m
            for c1 in range(a1, b1 + 1):
                y1x = y0x + c1 * Bf[1, 0]
                y1y = y0y + c1 * Bf[1, 1]
                y1z = y0z + c1 * Bf[1, 2]
                n1x = (n0x + c1 * Um[1, 0]) % m
                n1y = (n0y + c1 * Um[1, 1]) % m
                n1z = (n0z + c1 * Um[1, 2]) % m
                nx = (n1x + a2 * Um[2, 0]) % m
                ny = (n1y + a2 * Um[2, 1]) % m
                nz = (n1z + a2 * Um[2, 2]) % m
                sx = Um[2, 0]
                sy = Um[2, 1]
                sz = Um[2, 2]
                # y is evaluated directly per candidate (exact zeros for
                # zero coefficients); only the integer mod-m counters are
                # carried incrementally.
                for c2 in range(a2, b2 + 1):
                    yx = y1x + c2 * Bf[2, 0]
                    if 0.0 < yx <= cap:
                        yy = y1y + c2 * Bf[2, 1]
                        yz = y1z + c2 * Bf[2, 2]
                        if yy * yy + yz * yz < 1.0:
                            jdx = (nx * m + ny) * m + nz
                            if yx < amin[jdx]:
                                amin[jdx] = yx
                    nx += sx
                    if nx >= m:
                        nx -= m
                    ny += sy
                    if ny >= m:
                        ny -= m
                    nz += sz
                    if nz >= m:
                        nz -= m
        for jdx in range(m3):
            a = amin[jdx]
            amin[jdx] = np.inf
            if a <= cap:
                if a > amax:
                    amax = a
                bn = np.int64(a / delta)
                if bn >= nbins:
                    censored += 1
                else:
                    hist[bn] += 1
            else:
                censored += 1
    return hist, censored, amax


@njit(cache=True)
def _sample_lattice3(state, p, ncosets, kmat, scale, T, R, U, B):
    state, e = _below(state, ncosets)
    _hecke3(e, p, T)
    for i in range(3):
        for j in range(3):
            R[i, j] = T[i, j]
            U[i, j] = np.int64(1) if i == j else np.int64(0)
    _reduce_int(R, U)
    for i in range(3):
        for j in range(3):
            B[i, j] = scale * (
                R[i, 0] * kmat[0, j] + R[i, 1] * kmat[1, j] + R[i, 2] * kmat[2, j]
            )
    return state, e


@njit(cache=True)
def phi_hist_random(p, n_lo, n_hi, seed, kmat, with_shift, delta, nbins, cap):
    """Random-sample curve pass: uniform coset, optional uniform shift.

    Returns (bin counts, censored count, max path observed below cap).
    """
    hist = np.zeros(nbins, dtype=np.int64)
    censored = np.int64(0)
    amax = 0.0
    ncosets = np.int64(1) + p + p * p
    T = np.zeros((3, 3), dtype=np.int64)
    R = np.zeros((3, 3), dtype=np.int64)
    U = np.zeros((3, 3), dtype=np.int64)
    B = np.zeros((3, 3))
    inv = np.zeros((3, 3))
    scale = float(p) ** (-1.0 / 3.0)
    for i in range(n_lo, n_hi):
        st = _stream(seed, i)
        st, _e = _sample_lattice3(st, p, ncosets, kmat, scale, T, R, U, B)
        ox = 0.0
        oy = 0.0
        oz = 0.0
        if with_shift != 0:
            st, r = _next(st)
            xx = _u01(r)
            st, r = _next(st)
            xy = _u01(r)
            st, r = _next(st)
            xz = _u01(r)
            tx = xx * T[0, 0] + xy * T[1, 0] + xz * T[2, 0]
            ty = xx * T[0, 1] + xy * T[1, 1] + xz * T[2, 1]
            tz = xx * T[0, 2] + xy * T[1, 2] + xz * T[2, 2]
            ox = scale * (tx * kmat[0, 0] + ty * kmat[1, 0] + tz * kmat[2, 0])
            oy = scale * (tx * kmat[0, 1] + ty * kmat[1, 1] + tz * kmat[2, 1])
            oz = scale * (tx * kmat[0, 2] + ty * kmat[1, 2] + tz * kmat[2, 2])
            _inv3(B, inv)
            q0 = np.int64(round(ox * inv[0, 0] + oy * inv[1, 0] + oz * inv[2, 0]))
            q1 = np.int64(round(ox * inv[0, 1] + oy * inv[1, 1] + oz * inv[2, 1]))
            q2 = np.int64(round(ox * inv[0, 2] + oy * inv[1, 2] + oz * inv[2, 2]))
            ox -= q0 * B[0, 0] + q1 * B[1, 0] + q2 * B[2, 0]
            oy -= q0 * B[0, 1] + q1 * B[1, 1] + q2 * B[2, 1]
            oz -= q0 * B[0, 2] + q1 * B[1, 2] + q2 * B[2, 2]
        a = _tube_min_alpha(B, inv, ox, oy, oz, cap)
        if a <= cap:
            if a > amax:
                amax = a
            bn = np.int64(a / delta)
            if bn >= nbins:
                censored += 1
            else:
                hist[bn] += 1
        else:
            censored += 1
    return hist, censored, amax


@njit(cache=True)
def phi0_sample_debug(p, i, seed, kmat, cap):
    """Coset index and path length for one random-mode sample (test hook)."""
    ncosets = np.int64(1) + p + p * p
    T = np.zeros((3, 3), dtype=np.int64)
    R = np.zeros((3, 3), dtype=np.int64)
    U = np.zeros((3, 3), dtype=np.int64)
    B = np.zeros((3, 3))
    inv = np.zeros((3, 3))
    scale = float(p) ** (-1.0 / 3.0)
    st = _stream(seed, i)
    st, e = _sample_lattice3(st, p, ncosets, kmat, scale, T, R, U, B)
    a = _tube_min_alpha(B, inv, 0.0, 0.0, 0.0, cap)
    return e, a


# ---------------------------------------------------------------------------
# Transition-kernel estimator (block-matrix construction)


@njit(cache=True)
def _kernel_sample_rows(st, xi, w0, w1, z0, z1, p, scale2, T2, U2, B):
    nc2 = p + 1
    st, e = _below(st, nc2)
    _hecke2(e, p, T2)
    for i in range(2):
        for j in range(2):
            U2[i, j] = np.int64(1) if i == j else np.int64(0)
    _reduce_int(T2, U2)
    st, r = _next(st)
    th = 2.0 * math.pi * _u01(r)
    ct = math.cos(th)
    sn = math.sin(th)
    a00 = scale2 * (T2[0, 0] * ct - T2[0, 1] * sn)
    a01 = scale2 * (T2[0, 0] * sn + T2[0, 1] * ct)
    a10 = scale2 * (T2[1, 0] * ct - T2[1, 1] * sn)
    a11 = scale2 * (T2[1, 0] * sn + T2[1, 1] * ct)
    st, r = _next(st)
    v1 = _u01(r)
    st, r = _next(st)
    v2 = _u01(r)
    L = xi ** (1.0 / 3.0)
    s6 = xi ** (-1.0 / 6.0)
    B[0, 0] = L
    B[0, 1] = L * (z0 + w0)
    B[0, 2] = L * (z1 + w1)
    B[1, 0] = v1 * B[0, 0]
    B[1, 1] = v1 * B[0, 1] + s6 * a00
    B[1, 2] = v1 * B[0, 2] + s6 * a01
    B[2, 0] = v2 * B[0, 0]
    B[2, 1] = v2 * B[0, 1] + s6 * a10
    B[2, 2] = v2 * B[0, 2] + s6 * a11
    return st


@njit(cache=True)
def kernel_avoid_count(xi, w0, w1, z0, z1, p, n_lo, n_hi, seed):
    """Number of samples whose lattice misses the open scaled tube."""
    T2 = np.zeros((2, 2), dtype=np.int64)
    U2 = np.zeros((2, 2), dtype=np.int64)
    U3 = np.zeros((3, 3), dtype=np.int64)
    B = np.zeros((3, 3))
    inv = np.zeros((3, 3))
    scale2 = float(p) ** (-0.5)
    L = xi ** (1.0 / 3.0)
    count = np.int64(0)
    for i in range(n_lo, n_hi):
        st = _stream(seed, i)
        _kernel_sample_rows(st, xi, w0, w1, z0, z1, p, scale2, T2, U2, B)
        for a in range(3):
            for b in range(3):
                U3[a, b] = np.int64(1) if a == b else np.int64(0)
        _reduce_float3(B, U3)
        ey0, ey1, ey2 = _unimodular_inverse_row0(U3)
        if not _tube_hit_open(B, inv, L, L * z0, L * z1, L, ey0, ey1, ey2):
            count += 1
    return count


@njit(cache=True)
def kernel_sample_debug(xi, w0, w1, z0, z1, p, i, seed, Bout):
    """Reduced sample basis and avoidance flag for one sample (test hook)."""
    T2 = np.zeros((2, 2), dtype=np.int64)
    U2 = np.zeros((2, 2), dtype=np.int64)
    U3 = np.zeros((3, 3), dtype=np.int64)
    inv = np.zeros((3, 3))
    scale2 = float(p) ** (-0.5)
    L = xi ** (1.0 / 3.0)
    st = _stream(seed, i)
    _kernel_sample_rows(st, xi, w0, w1, z0, z1, p, scale2, T2, U2, Bout)
    for a in range(3):
        for b in range(3):
            U3[a, b] = np.int64(1) if a == b else np.int64(0)
    _reduce_float3(Bout, U3)
    ey0, ey1, ey2 = _unimodular_inverse_row0(U3)
    return not _tube_hit_open(Bout, inv, L, L * z0, L * z1, L, ey0, ey1, ey2)


# ---------------------------------------------------------------------------
# Cut-paraboloid avoidance (2-plane lattices)


@njit(cache=True, inline="always")
def _region_rect(yx, yy, hx, hy):
    """Axis box of {x : x+y in P, x.h < 0}; returns (empty, x1lo, x1hi, x2lo, x2hi)."""
    c = yx * hx + yy * hy
    disc = hy * hy + 4.0 * hx * (c + hx)
    if disc <= 0.0:
        return True, 0.0, 0.0, 0.0, 0.0
    sq = math.sqrt(disc)
    rlo = (-hy - sq) / (2.0 * hx)
    rhi = (-hy + sq) / (2.0 * hx)
    u1hi = max(rlo * rlo, rhi * rhi) - 1.0
    return False, -1.0 - yx, u1hi - yx, rlo - yy, rhi - yy


@njit(cache=True)
def _xi_sample_avoid(
    st, p, scale2, rootv, y1x, y1y, y2x, y2y, nreg, hx, hy,
    x1lo, x1hi, x2lo, x2hi, T2, U2,
):
    """One lattice draw plus an exact row-by-row avoidance test.

    The lattice is rootv * p^{-1/2} * (reduced coset rows) @ rotation.  For
    each line of lattice points along the shorter coefficient axis the
    region conditions reduce to a quadratic and two linear inequalities in
    the integer parameter, so membership needs no per-point scan.
    """
    st, e = _below(st, p + 1)
    _hecke2(e, p, T2)
    for i in range(2):
        for j in range(2):
            U2[i, j] = np.int64(1) if i == j else np.int64(0)
    _reduce_int(T2, U2)
    st, r = _next(st)
    th = 2.0 * math.pi * _u01(r)
    ct = math.cos(th)
    sn = math.sin(th)
    f = rootv * scale2
    b00 = f * (T2[0, 0] * ct - T2[0, 1] * sn)
    b01 = f * (T2[0, 0] * sn + T2[0, 1] * ct)
    b10 = f * (T2[1, 0] * ct - T2[1, 1] * sn)
    b11 = f * (T2[1, 0] * sn + T2[1, 1] * ct)
    det = b00 * b11 - b01 * b10
    i00 = b11 / det
    i01 = -b01 / det
    i10 = -b10 / det
    i11 = b00 / det
    # Coefficient spans of the region box under both axis choices.
    c0lo = 1e300
    c0hi = -1e300
    c1lo = 1e300
    c1hi = -1e300
    for corner in range(4):
        wx = x1hi if corner & 1 else x1lo
        wy = x2hi if corner & 2 else x2lo
        q0 = wx * i00 + wy * i10
        q1 = wx * i01 + wy * i11
        c0lo = min(c0lo, q0)
        c0hi = max(c0hi, q0)
        c1lo = min(c1lo, q1)
        c1hi = max(c1hi, q1)
    if c0hi - c0lo <= c1hi - c1lo:
        olo = np.int64(math.ceil(c0lo - 1e-9))
        ohi = np.int64(math.floor(c0hi + 1e-9))
        aox, aoy = b00, b01
        aix, aiy = b10, b11
    else:
        olo = np.int64(math.ceil(c1lo - 1e-9))
        ohi = np.int64(math.floor(c1hi + 1e-9))
        aox, aoy = b10, b11
        aix, aiy = b00, b01
    for co in range(olo, ohi + 1):
        gx = co * aox
        gy = co * aoy
        for reg in range(nreg):
            yrx = y1x if reg == 0 else y2x
            yry = y1y if reg == 0 else y2y
            Gx = gx + yrx
            Gy = gy + yry
            # (t*aiy + Gy)^2 - 1 - (t*aix + Gx) < 0
            qa = aiy * aiy
            qb = 2.0 * Gy * aiy - aix
            qc = Gy * Gy - 1.0 - Gx
            tlo = -1e300
            thi = 1e300
            if qa > 1e-14:
                d2 = qb * qb - 4.0 * qa * qc
                if d2 <= 0.0:
                    continue
                sq = math.sqrt(d2)
                tlo = (-qb - sq) / (2.0 * qa)
                thi = (-qb + sq) / (2.0 * qa)
            elif qb > 1e-14:
                thi = -qc / qb
            elif qb < -1e-14:
                tlo = -qc / qb
            elif qc >= 0.0:
                continue
            s = aix * hx + aiy * hy
            w = gx * hx + gy * hy
            if s > 1e-300:
                hi2 = -w / s
                if hi2 < thi:
                    thi = hi2
            elif s < -1e-300:
                lo2 = -w / s
                if lo2 > tlo:
                    tlo = lo2
            elif w >= 0.0:
                continue
            nfirst = math.floor(tlo) + 1.0
            if nfirst < thi:
                return st, False
    return st, True


@njit(cache=True)
def xi_avoid_count(y1x, y1y, y2x, y2y, nreg, hx, hy, v, p, n_lo, n_hi, seed):
    """Avoidance count for up to two cut paraboloids over random lattices."""
    T2 = np.zeros((2, 2), dtype=np.int64)
    U2 = np.zeros((2, 2), dtype=np.int64)
    e1, ax1, bx1, ay1, by1 = _region_rect(y1x, y1y, hx, hy)
    if nreg > 1:
        e2, ax2, bx2, ay2, by2 = _region_rect(y2x, y2y, hx, hy)
    else:
        e2, ax2, bx2, ay2, by2 = True, 0.0, 0.0, 0.0, 0.0
    if e1 and e2:
        return np.int64(n_hi - n_lo)
    if e1:
        ax1, bx1, ay1, by1 = ax2, bx2, ay2, by2
    elif not e2 and nreg > 1:
        ax1 = min(ax1, ax2)
        bx1 = max(bx1, bx2)
        ay1 = min(ay1, ay2)
        by1 = max(by1, by2)
    scale2 = float(p) ** (-0.5)
    rootv = math.sqrt(v)
    count = np.int64(0)
    for i in range(n_lo, n_hi):
        st = _stream(seed, i)
        st, ok = _xi_sample_avoid(
            st, p, scale2, rootv, y1x, y1y, y2x, y2y, nreg, hx, hy,
            ax1, bx1, ay1, by1, T2, U2,
        )
        if ok:
            count += 1
    return count


@njit(cache=True)
def xi_sample_debug(y1x, y1y, y2x, y2y, nreg, hx, hy, v, p, i, seed, Bout):
    """Sample basis and avoidance flag for one draw (test hook)."""
    T2 = np.zeros((2, 2), dtype=np.int64)
    U2 = np.zeros((2, 2), dtype=np.int64)
    e1, ax1, bx1, ay1, by1 = _region_rect(y1x, y1y, hx, hy)
    if nreg > 1:
        e2, ax2, bx2, ay2, by2 = _region_rect(y2x, y2y, hx, hy)
        if e1 and not e2:
            ax1, bx1, ay1, by1 = ax2, bx2, ay2, by2
        elif not e1 and not e2:
            ax1 = min(ax1, ax2)
            bx1 = max(bx1, bx2)
            ay1 = min(ay1, ay2)
            by1 = max(by1, by2)
    scale2 = float(p) ** (-0.5)
    rootv = math.sqrt(v)
    st = _stream(seed, i)
    st, e = _below(st, p + 1)
    _hecke2(e, p, T2)
    for a in range(2):
        for b in range(2):
            U2[a, b] = np.int64(1) if a == b else np.int64(0)
    _reduce_int(T2, U2)
    st, r = _next(st)
    th = 2.0 * math.pi * _u01(r)
    ct = math.cos(th)
    sn = math.sin(th)
    f = rootv * scale2
    Bout[0, 0] = f * (T2[0, 0] * ct - T2[0, 1] * sn)
    Bout[0, 1] = f * (T2[0, 0] * sn + T2[0, 1] * ct)
    Bout[1, 0] = f * (T2[1, 0] * ct - T2[1, 1] * sn)
    Bout[1, 1] = f * (T2[1, 0] * sn + T2[1, 1] * ct)
    st2 = _stream(seed, i)
    st2, ok = _xi_sample_avoid(
        st2, p, scale2, rootv, y1x, y1y, y2x, y2y, nreg, hx, hy,
        ax1, bx1, ay1, by1, T2, U2,
    )
    return ok


@njit(cache=True)
def paraboloid_norm_mc(X, n_outer, n_inner, p, seed):
    """MC value of the offset-region avoidance integral over the truncated
    paraboloid interior x1 < X, plus the sum of squared contributions."""
    T2 = np.zeros((2, 2), dtype=np.int64)
    U2 = np.zeros((2, 2), dtype=np.int64)
    s = math.sqrt(X + 1.0)
    vrect = 2.0 * s * (X + 1.0)
    scale2 = float(p) ** (-0.5)
    tot = 0.0
    tot2 = 0.0
    for i in range(n_outer):
        st = _stream(seed, i)
        st, r = _next(st)
        yy = -s + 2.0 * s * _u01(r)
        st, r = _next(st)
        yx = -1.0 + (X + 1.0) * _u01(r)
        g = 0.0
        if yx > yy * yy - 1.0:
            empt, ax, bx, ay, by = _region_rect(yx, yy, 1.0, 0.0)
            if not empt:
                cnt = 0
                for _t in range(n_inner):
                    st, ok = _xi_sample_avoid(
                        st, p, scale2, 1.0, yx, yy, 0.0, 0.0, 1, 1.0, 0.0,
                        ax, bx, ay, by, T2, U2,
                    )
                    if ok:
                        cnt += 1
                g = vrect * cnt / n_inner
            else:
                g = vrect
        tot += g
        tot2 += g * g
    return tot / n_outer, tot2


# ---------------------------------------------------------------------------
# Billiard flights


@njit(cache=True)
def _first_hit3(qx, qy, qz, vx, vy, vz, rho, tmax):
    eps = 1e-9
    r2 = rho * rho
    best = np.inf
    t0 = 0.0
    while t0 < tmax:
        t1 = min(t0 + 4.0, tmax)
        ax = qx + t0 * vx
        bx = qx + t1 * vx
        ay = qy + t0 * vy
        by = qy + t1 * vy
        az = qz + t0 * vz
        bz = qz + t1 * vz
        nx0 = np.int64(math.ceil(min(ax, bx) - rho))
        nx1 = np.int64(math.floor(max(ax, bx) + rho))
        ny0 = np.int64(math.ceil(min(ay, by) - rho))
        ny1 = np.int64(math.floor(max(ay, by) + rho))
        nz0 = np.int64(math.ceil(min(az, bz) - rho))
        nz1 = np.int64(math.floor(max(az, bz) + rho))
        for nx in range(nx0, nx1 + 1):
            dx = nx - qx
            for ny in range(ny0, ny1 + 1):
                dy = ny - qy
                for nz in range(nz0, nz1 + 1):
                    dz = nz - qz
                    b = dx * vx + dy * vy + dz * vz
                    if b <= eps:
                        continue
                    c = dx * dx + dy * dy + dz * dz - r2
                    disc = b * b - c
                    if disc > 0.0:
                        tt = b - math.sqrt(disc)
                        if eps < tt < best:
                            best = tt
        if best <= t1:
            return best
        t0 = t1
    return np.inf


@njit(cache=True)
def _first_hit2(qx, qy, vx, vy, rho, tmax):
    eps = 1e-9
    r2 = rho * rho
    best = np.inf
    t0 = 0.0
    while t0 < tmax:
        t1 = min(t0 + 4.0, tmax)
        ax = qx + t0 * vx
        bx = qx + t1 * vx
        ay = qy + t0 * vy
        by = qy + t1 * vy
        nx0 = np.int64(math.ceil(min(ax, bx) - rho))
        nx1 = np.int64(math.floor(max(ax, bx) + rho))
        ny0 = np.int64(math.ceil(min(ay, by) - rho))
        ny1 = np.int64(math.floor(max(ay, by) + rho))
        for nx in range(nx0, nx1 + 1):
            dx = nx - qx
            for ny in range(ny0, ny1 + 1):
                dy = ny - qy
                b = dx * vx + dy * vy
                if b <= eps:
                    continue
                c = dx * dx + dy * dy - r2
                disc = b * b - c
                if disc > 0.0:
                    tt = b - math.sqrt(disc)
                    if eps < tt < best:
                        best = tt
        if best <= t1:
            return best
        t0 = t1
    return np.inf


@njit(cache=True)
def billiard_lengths(d, mode, rho, n_lo, n_hi, seed, tmax, out):
    """Flight lengths for mode 0 (generic start), 1 (radial exit from a
    scatterer), 2 (specular bounce with uniform impact parameter).

    Censored flights (no hit within tmax) are reported as +inf.
    """
    for i in range(n_lo, n_hi):
        st = _stream(seed, i)
        if d == 3:
            st, r = _next(st)
            zc = 2.0 * _u01(r) - 1.0
            st, r = _next(st)
            ph = 2.0 * math.pi * _u01(r)
            sxy = math.sqrt(max(0.0, 1.0 - zc * zc))
            vx = sxy * math.cos(ph)
            vy = sxy * math.sin(ph)
            vz = zc
            if mode == 0:
                qx = 0.0
                qy = 0.0
                qz = 0.0
                while True:
                    st, r = _next(st)
                    qx = _u01(r)
                    st, r = _next(st)
                    qy = _u01(r)
                    st, r = _next(st)
                    qz = _u01(r)
                    dx = qx - round(qx)
                    dy = qy - round(qy)
                    dz = qz - round(qz)
                    if dx * dx + dy * dy + dz * dz > rho * rho:
                        break
            elif mode == 1:
                qx = rho * vx
                qy = rho * vy
                qz = rho * vz
            else:
                st, r = _next(st)
                rr = rho * math.sqrt(_u01(r))
                st, r = _next(st)
                an = 2.0 * math.pi * _u01(r)
                if abs(vx) < 0.9:
                    crx, cry, crz = 1.0, 0.0, 0.0
                else:
                    crx, cry, crz = 0.0, 1.0, 0.0
                e1x = cry * vz - crz * vy
                e1y = crz * vx - crx * vz
                e1z = crx * vy - cry * vx
                nrm = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
                e1x /= nrm
                e1y /= nrm
                e1z /= nrm
                e2x = vy * e1z - vz * e1y
                e2y = vz * e1x - vx * e1z
                e2z = vx * e1y - vy * e1x
                sxx = rr * (math.cos(an) * e1x + math.sin(an) * e2x)
                sxy2 = rr * (math.cos(an) * e1y + math.sin(an) * e2y)
                sxz = rr * (math.cos(an) * e1z + math.sin(an) * e2z)
                depth = math.sqrt(rho * rho - rr * rr)
                qx = sxx - depth * vx
                qy = sxy2 - depth * vy
                qz = sxz - depth * vz
                ndot = (qx * vx + qy * vy + qz * vz) / rho
                vx = vx - 2.0 * ndot * qx / rho
                vy = vy - 2.0 * ndot * qy / rho
                vz = vz - 2.0 * ndot * qz / rho
            out[i - n_lo] = _first_hit3(qx, qy, qz, vx, vy, vz, rho, tmax)
        else:
            st, r = _next(st)
            ph = 2.0 * math.pi * _u01(r)
            vx = math.cos(ph)
            vy = math.sin(ph)
            if mode == 0:
                qx = 0.0
                qy = 0.0
                while True:
                    st, r = _next(st)
                    qx = _u01(r)
                    st, r = _next(st)
                    qy = _u01(r)
                    dx = qx - round(qx)
                    dy = qy - round(qy)
                    if dx * dx + dy * dy > rho * rho:
                        break
            elif mode == 1:
                qx = rho * vx
                qy = rho * vy
            else:
                st, r = _next(st)
                ss = rho * (2.0 * _u01(r) - 1.0)
                e1x = -vy
                e1y = vx
                depth = math.sqrt(rho * rho - ss * ss)
                qx = ss * e1x - depth * vx
                qy = ss * e1y - depth * vy
                ndot = (qx * vx + qy * vy) / rho
                vx = vx - 2.0 * ndot * qx / rho
                vy = vy - 2.0 * ndot * qy / rho
            out[i - n_lo] = _first_hit2(qx, qy, vx, vy, rho, tmax)
    return 0
