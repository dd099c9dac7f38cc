"""Small numpy models: MLP feature extractors, a linear head, and an attention head."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..attention import AttentionParams, attention_backward, attention_forward


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    idx = np.arange(n)
    loss = float(-np.mean(np.log(np.maximum(p[idx, labels], 1e-30)), dtype=np.float64))
    g = p.copy()
    g[idx, labels] -= 1
    return loss, g / g.dtype.type(n)


@dataclass
class MLP:
    """Rectified feed-forward trunk plus linear classifier.

    ``features`` is the output of the last hidden layer (or the input when
    there are no hidden layers, i.e. a linear probe).
    """

    widths: tuple[int, ...]
    num_classes: int
    params: dict

    @classmethod
    def init(cls, in_dim, hidden, num_classes, rng, dtype=np.float32) -> "MLP":
        params = {}
        dims = [in_dim, *hidden]
        for i in range(len(hidden)):
            params[f"w{i}"] = _uniform(rng, dims[i], (dims[i], dims[i + 1]), dtype)
            params[f"b{i}"] = np.zeros(dims[i + 1], dtype=dtype)
        params["w_out"] = _uniform(rng, dims[-1], (dims[-1], num_classes), dtype)
        params["b_out"] = np.zeros(num_classes, dtype=dtype)
        return cls(tuple(dims), num_classes, params)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    def embed(self, x):
        acts = [x]
        h = x
        for i in range(self.depth):
            h = np.maximum(h @ self.params[f"w{i}"] + self.params[f"b{i}"], 0)
            acts.append(h)
        return h, acts

    def forward(self, x):
        feats, acts = self.embed(x)
        logits = feats @ self.params["w_out"] + self.params["b_out"]
        return logits, feats, acts

    def backward(self, acts, d_logits=None, d_feats=None) -> dict:
        """Parameter gradients from upstream grads on logits and/or features."""
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        feats = acts[-1]
        dh = np.zeros_like(feats)
        if d_logits is not None:
            grads["w_out"] = feats.T @ d_logits
            grads["b_out"] = d_logits.sum(axis=0)
            dh = dh + d_logits @ self.params["w_out"].T
        if d_feats is not None:
            dh = dh + d_feats
        for i in reversed(range(self.depth)):
            dz = dh * (acts[i + 1] > 0)
            grads[f"w{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"w{i}"].T
        return grads

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}


@dataclass
class RelationModel:
    """Rectified embedding, attention head, and a classifier on ``h + attended(h)``."""

    params: dict

    @classmethod
    def init(cls, in_dim, embed_dim, d_k, num_classes, rng, dtype=np.float32) -> "RelationModel":
        att = AttentionParams.init(embed_dim, d_k, rng, dtype)
        params = {
            "w_emb": _uniform(rng, in_dim, (in_dim, embed_dim), dtype),
            "b_emb": np.zeros(embed_dim, dtype=dtype),
            "wk": att.wk,
            "wq": att.wq,
            "w_out": _uniform(rng, embed_dim, (embed_dim, num_classes), dtype),
            "b_out": np.zeros(num_classes, dtype=dtype),
        }
        return cls(params)

    def attention(self) -> AttentionParams:
        return AttentionParams(self.params["wk"], self.params["wq"])

    def forward(self, x):
        p = self.params
        h = np.maximum(x @ p["w_emb"] + p["b_emb"], 0)
        raw, _, out, cache = attention_forward(h, self.attention())
        z = h + out
        logits = z @ p["w_out"] + p["b_out"]
        return logits, raw, (x, h, z, cache)

    def backward(self, state, d_logits=None, d_raw=None) -> dict:
        p = self.params
        x, h, z, cache = state
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dz = np.zeros_like(z)
        if d_logits is not None:
            grads["w_out"] = z.T @ d_logits
            grads["b_out"] = d_logits.sum(axis=0)
            dz = d_logits @ p["w_out"].T
        ag = attention_backward(cache, dz, d_raw)
        grads["wk"] = ag.wk.astype(p["wk"].dtype, copy=False)
        grads["wq"] = ag.wq.astype(p["wq"].dtype, copy=False)
        dh = (dz + ag.features) * (h > 0)
        grads["w_emb"] = x.T @ dh
        grads["b_emb"] = dh.sum(axis=0)
        return grads
