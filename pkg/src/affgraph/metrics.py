"""Ranking and classification metrics."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .affinity import AffinityMatrix
from .errors import ShapeError, UndefinedMetricError


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i <= j else (j, i)


def _dedupe(predicted: Iterable[tuple[int, int, float]]) -> list[tuple[int, int, float]]:
    best: dict[tuple[int, int], float] = {}
    for i, j, s in predicted:
        key = _pair(int(i), int(j))
        s = float(s)
        if key not in best or s > best[key]:
            best[key] = s
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(i, j, s) for (i, j), s in ranked]


def rank_pairs(w, k: int | None = None) -> list[tuple[int, int, float]]:
    """Off-diagonal pairs ``(i, j, score)`` with ``i < j``, best first.

    A pair scores the larger of its two directed entries. Ties are broken by
    ascending ``(i, j)``.
    """
    raw = w.raw if isinstance(w, AffinityMatrix) else np.asarray(w)
    n = raw.shape[0]
    if raw.ndim != 2 or raw.shape[1] != n:
        raise ShapeError(f"expected a square score matrix, got {raw.shape}")
    if n < 2:
        raise ShapeError("need at least two entities to rank pairs")
    iu, ju = np.triu_indices(n, 1)
    sym = np.maximum(raw[iu, ju], raw[ju, iu])
    # lexsort is stable and keys run last-to-first: score desc, then i, then j
    order = np.lexsort((ju, iu, -sym))
    if k is not None:
        order = order[:k]
    return [(int(iu[o]), int(ju[o]), float(sym[o])) for o in order]


def recall_at_k(predicted: Iterable[tuple[int, int, float]], truth: Iterable[tuple[int, int]], k: int) -> float:
    """Fraction of unordered truth pairs found among the top ``k`` predictions."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    truth_set = {_pair(int(i), int(j)) for i, j in truth}
    if not truth_set:
        raise UndefinedMetricError("recall is undefined for an empty truth set")
    top = {(i, j) for i, j, _ in _dedupe(predicted)[:k]}
    return len(truth_set & top) / len(truth_set)


def scene_recall(raw, proposal_match: Sequence[int], truth: Iterable[tuple[int, int]], k: int) -> float:
    """Object-pair recall from the top ``k`` proposal pairs.

    ``proposal_match`` maps each proposal to its ground-truth object (-1 for
    none); a proposal pair covers the object pair it maps to.
    """
    truth_set = {_pair(int(i), int(j)) for i, j in truth}
    if not truth_set:
        raise UndefinedMetricError("recall is undefined for an empty truth set")
    covered = set()
    for i, j, _ in rank_pairs(raw, k):
        a, b = proposal_match[i], proposal_match[j]
        if a >= 0 and b >= 0 and a != b:
            covered.add(_pair(a, b))
    return len(truth_set & covered) / len(truth_set)


def accuracy(logits, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def scatter_ratio(features, labels) -> float:
    """Mean within-class over mean between-class pairwise Euclidean distance."""
    f = np.asarray(features, dtype=np.float64)
    lab = np.asarray(labels)
    sq = (f * f).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * f @ f.T, 0.0)
    d = np.sqrt(d2)
    iu, ju = np.triu_indices(len(lab), 1)
    same = lab[iu] == lab[ju]
    if not same.any() or same.all():
        raise UndefinedMetricError("scatter ratio needs both within- and between-class pairs")
    return float(d[iu, ju][same].mean() / d[iu, ju][~same].mean())
