"""Compiled kernels for the O(N^2) boundary quadratures.

Every kernel walks j outward from the evaluation index i in a fixed cyclic
order and accumulates with Kahan compensation, so sums are bitwise
reproducible.  Parallel kernels only parallelize over rows and each row is
reduced serially by a single thread, which keeps results independent of the
numba thread count.

The singular window excludes indices within m of i.  Its arc extent is
asymmetric on nonuniform grids: hp[i] / hm[i] are the excluded arc lengths
ahead of / behind vertex i, measured to the edge of the first included
quadrature cell.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def window_halves(elen, m):
    # hp[i] = e_i + ... + e_{i+m-1} + e_{i+m}/2 ; hm mirrors it backwards
    n = elen.shape[0]
    hp = np.empty(n)
    hm = np.empty(n)
    for i in range(n):
        sp = 0.5 * elen[(i + m) % n]
        for k in range(m):
            sp += elen[(i + k) % n]
        sm = 0.5 * elen[(i - m - 1) % n]
        for k in range(1, m + 1):
            sm += elen[(i - k) % n]
        hp[i] = sp
        hm[i] = sm
    return hp, hm


@njit(cache=True)
def _hs_row(pts, nrm, w, i, s, m):
    n = pts.shape[0]
    xi0 = pts[i, 0]
    xi1 = pts[i, 1]
    ex = -(2.0 + s) * 0.5
    acc = 0.0
    comp = 0.0
    for dj in range(m + 1, n - m):
        j = i + dj
        if j >= n:
            j -= n
        d0 = pts[j, 0] - xi0
        d1 = pts[j, 1] - xi1
        r2 = d0 * d0 + d1 * d1
        term = (d0 * nrm[j, 0] + d1 * nrm[j, 1]) * w[j] * r2**ex
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc


@njit(cache=True, parallel=True)
def hs_all_kernel(pts, nrm, w, kappa, hp, hm, s, m, corrected):
    # H_i = 2(1-s) pv-int <y-x, nu(y)> / |y-x|^{2+s} dmu
    # near-window integrand is (kappa/2)|u|^{-s}; the excluded mass
    # integrates to kappa (hp^{1-s} + hm^{1-s}) / (2(1-s)) per side pair
    n = pts.shape[0]
    out = np.empty(n)
    for i in prange(n):
        val = 2.0 * (1.0 - s) * _hs_row(pts, nrm, w, i, s, m)
        if corrected:
            val += kappa[i] * (hp[i]**(1.0 - s) + hm[i]**(1.0 - s))
        out[i] = val
    return out


@njit(cache=True)
def _a2_row(pts, nrm, w, i, s, m):
    n = pts.shape[0]
    xi0 = pts[i, 0]
    xi1 = pts[i, 1]
    ni0 = nrm[i, 0]
    ni1 = nrm[i, 1]
    ex = -(2.0 + s) * 0.5
    acc = 0.0
    comp = 0.0
    for dj in range(m + 1, n - m):
        j = i + dj
        if j >= n:
            j -= n
        d0 = pts[j, 0] - xi0
        d1 = pts[j, 1] - xi1
        r2 = d0 * d0 + d1 * d1
        term = (1.0 - (ni0 * nrm[j, 0] + ni1 * nrm[j, 1])) * w[j] * r2**ex
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc


@njit(cache=True, parallel=True)
def a2_all_kernel(pts, nrm, w, kappa, hp, hm, s, m, corrected):
    # bare integral of (1 - nu(y).nu(x)) / |y-x|^{2+s}; integrand near the
    # window is (kappa^2/2)|u|^{-s}, same weak singularity as the h_s one
    n = pts.shape[0]
    out = np.empty(n)
    for i in prange(n):
        val = _a2_row(pts, nrm, w, i, s, m)
        if corrected:
            val += 0.5 * kappa[i]**2 * (hp[i]**(1.0 - s) + hm[i]**(1.0 - s)) \
                / (1.0 - s)
        out[i] = val
    return out


@njit(cache=True)
def _laplace_row(pts, w, f, i, s, m):
    n = pts.shape[0]
    xi0 = pts[i, 0]
    xi1 = pts[i, 1]
    fi = f[i]
    ex = -(2.0 + s) * 0.5
    acc = 0.0
    comp = 0.0
    for dj in range(m + 1, n - m):
        j = i + dj
        if j >= n:
            j -= n
        d0 = pts[j, 0] - xi0
        d1 = pts[j, 1] - xi1
        r2 = d0 * d0 + d1 * d1
        term = (f[j] - fi) * w[j] * r2**ex
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc


@njit(cache=True, parallel=True)
def laplace_all_kernel(pts, w, f, fp, fpp, hp, hm, s, m, corrected):
    # bare pv-int (f(y) - f(x)) / |y-x|^{2+s} dmu.  Near the window the
    # integrand splits into f' sign(u)|u|^{-1-s} (odd, cancels only on
    # symmetric windows) and (f''/2)|u|^{-s} (even); both excluded masses
    # are restored analytically from arc-length derivatives of f.
    n = pts.shape[0]
    out = np.empty(n)
    for i in prange(n):
        val = _laplace_row(pts, w, f, i, s, m)
        if corrected:
            val += 0.5 * fpp[i] * (hp[i]**(1.0 - s) + hm[i]**(1.0 - s)) \
                / (1.0 - s)
            val += fp[i] * (hm[i]**(-s) - hp[i]**(-s)) / s
        out[i] = val
    return out


@njit(cache=True)
def tang_row(pts, nrm, w, i, v0, v1, s, m):
    n = pts.shape[0]
    xi0 = pts[i, 0]
    xi1 = pts[i, 1]
    ex = -(2.0 + s) * 0.5
    acc = 0.0
    comp = 0.0
    for dj in range(m + 1, n - m):
        j = i + dj
        if j >= n:
            j -= n
        d0 = pts[j, 0] - xi0
        d1 = pts[j, 1] - xi1
        r2 = d0 * d0 + d1 * d1
        term = (nrm[j, 0] * v0 + nrm[j, 1] * v1) * w[j] * r2**ex
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc


@njit(cache=True, parallel=True)
def pers_rows_kernel(pts, nrm, w, s, m):
    # row sums of w_i w_j nu(x_i).nu(x_j) / |x_i-x_j|^s outside the window
    n = pts.shape[0]
    out = np.empty(n)
    ex = -0.5 * s
    for i in prange(n):
        xi0 = pts[i, 0]
        xi1 = pts[i, 1]
        ni0 = nrm[i, 0]
        ni1 = nrm[i, 1]
        acc = 0.0
        comp = 0.0
        for dj in range(m + 1, n - m):
            j = i + dj
            if j >= n:
                j -= n
            d0 = pts[j, 0] - xi0
            d1 = pts[j, 1] - xi1
            r2 = d0 * d0 + d1 * d1
            term = (ni0 * nrm[j, 0] + ni1 * nrm[j, 1]) * w[j] * r2**ex
            y = term - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        out[i] = acc * w[i]
    return out


@njit(cache=True)
def max_pair_distance(pts):
    # brute-force max pairwise distance; used only on diagnostic strides
    n = pts.shape[0]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d0 = pts[j, 0] - pts[i, 0]
            d1 = pts[j, 1] - pts[i, 1]
            d2 = d0 * d0 + d1 * d1
            if d2 > best:
                best = d2
    return np.sqrt(best)
