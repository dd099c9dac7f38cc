# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops for the per-batch affinity kernels.

Mirrors ``_pykernels``; summation order is fixed so results are deterministic.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, INFINITY

cnp.import_array()


def pairwise_iou(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double w, h, inter, aa, ab
    for i in range(n):
        aa = (av[i, 2] - av[i, 0]) * (av[i, 3] - av[i, 1])
        for j in range(m):
            ab = (bv[j, 2] - bv[j, 0]) * (bv[j, 3] - bv[j, 1])
            w = min(av[i, 2], bv[j, 2]) - max(av[i, 0], bv[j, 0])
            h = min(av[i, 3], bv[j, 3]) - max(av[i, 1], bv[j, 1])
            if w <= 0 or h <= 0:
                inter = 0.0
            else:
                inter = w * h
            ov[i, j] = inter / (aa + ab - inter)
    return out


def _l2_affinity(floating[:, ::1] f, floating[:, ::1] out):
    cdef Py_ssize_t n = f.shape[0], d = f.shape[1], i, j, k
    cdef floating acc, diff
    for i in range(n):
        out[i, i] = 0
        for j in range(i + 1, n):
            acc = 0
            for k in range(d):
                diff = f[i, k] - f[j, k]
                acc = acc + diff * diff
            out[i, j] = -0.5 * acc
            out[j, i] = -0.5 * acc


def l2_affinity(f):
    f = np.ascontiguousarray(f)
    out = np.empty((f.shape[0], f.shape[0]), dtype=f.dtype)
    _l2_affinity(f, out)
    return out


def _sym_rowsum(floating[:, ::1] g, floating[:, ::1] s, floating[::1] rs):
    # s = g + g.T in 32x32 tiles to keep the transposed reads in cache;
    # rs = row sums of s, i.e. row sums plus column sums of g, in contiguous sweeps
    cdef Py_ssize_t n = g.shape[0], i, j, bi, bj, ie, je
    cdef Py_ssize_t tile = 32
    for bi in range(0, n, tile):
        ie = min(bi + tile, n)
        for bj in range(0, n, tile):
            je = min(bj + tile, n)
            for i in range(bi, ie):
                for j in range(bj, je):
                    s[i, j] = g[i, j] + g[j, i]
    for i in range(n):
        rs[i] = 0
    for i in range(n):
        for j in range(n):
            rs[i] = rs[i] + s[i, j]


def l2_affinity_backward(f, g):
    # the s @ f product goes through BLAS; loops only build s and its row sums
    f = np.ascontiguousarray(f)
    g = np.ascontiguousarray(g, dtype=f.dtype)
    s = np.empty_like(g)
    rs = np.empty(g.shape[0], dtype=f.dtype)
    _sym_rowsum(g, s, rs)
    out = s @ f
    out -= rs[:, None] * f
    return out


def _normalize(floating[:, ::1] raw, floating[:, ::1] t, bint rowwise, bint mask,
               floating[:, ::1] wt, floating[::1] row_mass):
    cdef Py_ssize_t n = raw.shape[0], m = raw.shape[1], i, j
    cdef double mx, z, e, acc
    if not rowwise:
        mx = -INFINITY
        for i in range(n):
            for j in range(m):
                if mask and i == j:
                    continue
                if raw[i, j] > mx:
                    mx = raw[i, j]
        z = 0.0
        for i in range(n):
            for j in range(m):
                if mask and i == j:
                    wt[i, j] = 0
                    continue
                e = exp(raw[i, j] - mx)
                wt[i, j] = <floating>e
                z += e
        for i in range(n):
            acc = 0.0
            for j in range(m):
                wt[i, j] = <floating>(wt[i, j] / z)
                acc += wt[i, j] * t[i, j]
            row_mass[i] = <floating>acc
    else:
        for i in range(n):
            mx = -INFINITY
            for j in range(m):
                if mask and i == j:
                    continue
                if raw[i, j] > mx:
                    mx = raw[i, j]
            z = 0.0
            for j in range(m):
                if mask and i == j:
                    wt[i, j] = 0
                    continue
                e = exp(raw[i, j] - mx)
                wt[i, j] = <floating>e
                z += e
            if z == 0.0:
                z = 1.0
            acc = 0.0
            for j in range(m):
                wt[i, j] = <floating>(wt[i, j] / z)
                acc += wt[i, j] * t[i, j]
            row_mass[i] = <floating>acc


def normalize_mass(raw, t, rowwise, mask_diag):
    raw = np.ascontiguousarray(raw)
    t = np.ascontiguousarray(t, dtype=raw.dtype)
    wt = np.empty_like(raw)
    row_mass = np.empty(raw.shape[0], dtype=raw.dtype)
    _normalize(raw, t, rowwise, mask_diag, wt, row_mass)
    has = t.sum(axis=1) > 0
    if rowwise:
        mass = row_mass[has].mean() if has.any() else 0.0
    else:
        mass = row_mass.sum()
    return wt, row_mass, float(mass), int(has.sum())


def _mass_backward(floating[:, ::1] wt, floating[:, ::1] t, floating[::1] coef,
                   bint rowwise, floating[:, ::1] out):
    cdef Py_ssize_t n = wt.shape[0], m = wt.shape[1], i, j
    cdef double s = 0.0, si
    if not rowwise:
        for i in range(n):
            for j in range(m):
                s += coef[i] * t[i, j] * wt[i, j]
        for i in range(n):
            for j in range(m):
                out[i, j] = <floating>(wt[i, j] * (coef[i] * t[i, j] - s))
    else:
        for i in range(n):
            si = 0.0
            for j in range(m):
                si += coef[i] * t[i, j] * wt[i, j]
            for j in range(m):
                out[i, j] = <floating>(wt[i, j] * (coef[i] * t[i, j] - si))


def mass_backward(wt, t, coef, rowwise):
    wt = np.ascontiguousarray(wt)
    t = np.ascontiguousarray(t, dtype=wt.dtype)
    coef = np.ascontiguousarray(coef, dtype=wt.dtype)
    out = np.empty_like(wt)
    _mass_backward(wt, t, coef, rowwise, out)
    return out
