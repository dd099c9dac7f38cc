"""Single-head appearance attention with supervisable raw scores.

Aggregation always uses a row-wise softmax. The raw scores are exposed so an
affinity loss (which may normalize matrix-wise) can be attached to them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .affinity import affinity_dot
from .errors import ShapeError, StateError
from .numerics import as_matrix, softmax_rows


@dataclass
class AttentionParams:
    wk: np.ndarray
    wq: np.ndarray

    def __post_init__(self):
        self.wk = as_matrix(self.wk)
        self.wq = as_matrix(self.wq)
        if self.wk.shape != self.wq.shape or self.wk.shape[1] < 1:
            raise ShapeError(f"bad projection shapes {self.wk.shape}, {self.wq.shape}")

    @property
    def d_k(self) -> int:
        return self.wk.shape[1]

    @classmethod
    def init(cls, d: int, d_k: int, rng: np.random.Generator, dtype=np.float64) -> "AttentionParams":
        bound = 1.0 / math.sqrt(d)
        wk = rng.uniform(-bound, bound, size=(d, d_k)).astype(dtype)
        wq = rng.uniform(-bound, bound, size=(d, d_k)).astype(dtype)
        return cls(wk, wq)


@dataclass
class AttentionCache:
    features: np.ndarray
    keys: np.ndarray
    queries: np.ndarray
    weights: np.ndarray
    wk: np.ndarray
    wq: np.ndarray
    params: AttentionParams


class AttentionGrads(NamedTuple):
    features: np.ndarray
    wk: np.ndarray
    wq: np.ndarray
    raw: np.ndarray


def attention_forward(features, params: AttentionParams):
    """Returns ``(raw, weights, out, cache)``; ``out = row_softmax(raw) @ features``."""
    f = as_matrix(features)
    if f.shape[1] != params.wk.shape[0]:
        raise ShapeError(f"features {f.shape} do not match projections {params.wk.shape}")
    raw = affinity_dot(f, params.wk, params.wq)
    weights = softmax_rows(raw.raw)
    out = weights @ f
    cache = AttentionCache(
        f, f @ params.wk, f @ params.wq, weights, params.wk.copy(), params.wq.copy(), params
    )
    return raw, weights, out, cache


def attention_backward(cache: AttentionCache, d_out, d_raw=None, lam: float = 1.0) -> AttentionGrads:
    """Chain ``d_out`` through the aggregation and add ``lam * d_raw`` on the raw scores."""
    p = cache.params
    if not (np.array_equal(p.wk, cache.wk) and np.array_equal(p.wq, cache.wq)):
        raise StateError("attention parameters changed since the forward pass")
    f, wt = cache.features, cache.weights
    d_out = np.asarray(d_out, dtype=f.dtype)
    if d_out.shape != f.shape:
        raise ShapeError(f"upstream gradient {d_out.shape} does not match output {f.shape}")
    d_weights = d_out @ f.T
    d_feat = wt.T @ d_out
    d_scores = wt * (d_weights - (d_weights * wt).sum(axis=1, keepdims=True))
    if d_raw is not None and lam != 0:
        d_raw = np.asarray(d_raw, dtype=f.dtype)
        if d_raw.shape != wt.shape:
            raise ShapeError(f"raw-score gradient {d_raw.shape} does not match {wt.shape}")
        d_scores = d_scores + lam * d_raw
    scale = 1.0 / math.sqrt(p.d_k)
    d_keys = scale * (d_scores @ cache.queries)
    d_queries = scale * (d_scores.T @ cache.keys)
    d_feat = d_feat + d_keys @ p.wk.T + d_queries @ p.wq.T
    return AttentionGrads(d_feat, f.T @ d_keys, f.T @ d_queries, d_scores)

