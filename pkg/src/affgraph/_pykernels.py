"""Pure numpy versions of the hot kernels.

Used when the compiled extension is unavailable or AFFGRAPH_PURE_PYTHON is set.
Signatures and results match ``_ckernels`` to rounding.
"""
import numpy as np


def pairwise_iou(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ix0 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy0 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix1 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix1 - ix0, 0.0, None) * np.clip(iy1 - iy0, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def l2_affinity(f):
    f = np.ascontiguousarray(f)
    diff = f[:, None, :] - f[None, :, :]
    return -0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def l2_affinity_backward(f, g):
    f = np.ascontiguousarray(f)
    s = g + g.T
    return s @ f - s.sum(axis=1)[:, None] * f


def normalize_mass(raw, t, rowwise, mask_diag):
    n = raw.shape[0]
    w = raw.copy()
    if mask_diag:
        w[np.arange(n), np.arange(n)] = -np.inf
    if rowwise:
        m = w.max(axis=1, keepdims=True)
        m[~np.isfinite(m)] = 0.0
        e = np.exp(w - m)
        z = e.sum(axis=1, keepdims=True)
        z[z == 0] = 1.0
        wt = e / z
    else:
        e = np.exp(w - w.max())
        wt = e / e.sum()
    row_mass = (wt * t).sum(axis=1)
    has = t.sum(axis=1) > 0
    if rowwise:
        mass = row_mass[has].mean() if has.any() else 0.0
    else:
        mass = row_mass.sum()
    return wt, row_mass, float(mass), int(has.sum())


def mass_backward(wt, t, coef, rowwise):
    g = coef[:, None] * t
    if rowwise:
        s = (g * wt).sum(axis=1, keepdims=True)
    else:
        s = (g * wt).sum()
    return wt * (g - s)
