"""Dense matrix helpers, stable softmax variants, seeded RNG and a gradient checker."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

RNG_ALGORITHM = "philox4x64"


def as_matrix(x, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a 2-D finite array, raising on anything else."""
    a = np.asarray(x, dtype=dtype)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul overflowed")
    return out


def softmax_matrix(w) -> np.ndarray:
    """Softmax over every entry of ``w`` jointly; all entries sum to one."""
    w = as_matrix(w)
    if w.size == 0:
        raise ShapeError("softmax of an empty matrix")
    e = np.exp(w - w.max())
    return e / e.sum()


def softmax_rows(w) -> np.ndarray:
    """Softmax along each row independently."""
    w = as_matrix(w)
    if w.shape[1] == 0:
        raise ShapeError("softmax over zero-width rows")
    e = np.exp(w - w.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; equal seeds give equal streams on every platform."""
    return np.random.Generator(np.random.Philox(np.uint64(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def grad_check(
    f: Callable[[np.ndarray], float],
    analytic_grad,
    x,
    step: float = 1e-6,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f`` at ``x``.

    The error per entry is ``|fd - analytic| / max(1, |analytic|)``.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step {step} outside [1e-7, 1e-3]")
    x = np.array(x, dtype=np.float64)
    g = np.asarray(analytic_grad, dtype=np.float64)
    if g.shape != x.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match input {x.shape}")
    fd = np.empty_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x))
        flat[i] = orig - step
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at probe {i}")
        fd.reshape(-1)[i] = (fp - fm) / (2.0 * step)
    err = np.abs(fd - g) / np.maximum(1.0, np.abs(g))
    return float(err.max()) if err.size else 0.0
