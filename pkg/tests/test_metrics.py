import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affgraph.errors import ShapeError, UndefinedMetricError
from affgraph.metrics import accuracy, rank_pairs, recall_at_k, scatter_ratio, scene_recall


def test_recall_examples():
    pred = [(0, 1, 0.9), (1, 2, 0.5), (0, 2, 0.1)]
    assert recall_at_k(pred, [(0, 1), (2, 1)], 3) == 1.0
    assert recall_at_k(pred, [(0, 1), (0, 2)], 1) == 0.5
    assert recall_at_k(pred, [(3, 4)], 3) == 0.0


def test_recall_dedupes_unordered_pairs():
    pred = [(1, 0, 0.2), (0, 1, 0.9), (2, 3, 0.5)]
    # (0,1) appears twice; it counts once at its max score
    assert recall_at_k(pred, [(2, 3)], 2) == 1.0
    assert recall_at_k(pred, [(2, 3)], 1) == 0.0


def test_recall_errors():
    with pytest.raises(UndefinedMetricError):
        recall_at_k([(0, 1, 1.0)], [], 1)
    with pytest.raises(ValueError):
        recall_at_k([(0, 1, 1.0)], [(0, 1)], 0)


def test_rank_pairs_examples():
    assert [p[:2] for p in rank_pairs(np.zeros((2, 2)), k=10)] == [(0, 1)]
    w = np.arange(16.0).reshape(4, 4)
    assert rank_pairs(w)[0][:2] == (2, 3)  # global max entry (3, 2), symmetrized
    assert [p[:2] for p in rank_pairs(np.ones((4, 4)))] == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_rank_pairs_errors():
    with pytest.raises(ShapeError):
        rank_pairs(np.zeros((1, 1)))
    with pytest.raises(ShapeError):
        rank_pairs(np.zeros((2, 3)))


matrices = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).integers(-3, 4, size=(6, 6)).astype(float))


@given(matrices, st.floats(-1e3, 1e3))
def test_rank_pairs_shift_invariant(w, c):
    assert [p[:2] for p in rank_pairs(w)] == [p[:2] for p in rank_pairs(w + c)]


@given(matrices, st.integers(0, 2**32 - 1))
def test_recall_monotone_in_k(w, seed):
    rng = np.random.default_rng(seed)
    truth = {tuple(sorted(rng.choice(6, 2, replace=False).tolist())) for _ in range(4)}
    ranked = rank_pairs(w)
    values = [recall_at_k(ranked, truth, k) for k in range(1, 16)]
    assert values == sorted(values)
    assert values[-1] == 1.0


def test_scene_recall_maps_to_objects():
    raw = np.full((4, 4), -1.0)
    raw[0, 1] = 5.0  # proposals 0 and 1 both on object 0: no object pair
    raw[2, 3] = 4.0  # objects 0 and 1
    match = [0, 0, 0, 1]
    assert scene_recall(raw, match, [(0, 1)], 1) == 0.0
    assert scene_recall(raw, match, [(1, 0)], 2) == 1.0


def test_accuracy_and_scatter():
    assert accuracy(np.array([[1.0, 0], [0, 1], [1, 0]]), [0, 1, 1]) == pytest.approx(2 / 3)
    f = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert scatter_ratio(f, [0, 0, 1, 1]) == pytest.approx(1.0 / 10.0)
    with pytest.raises(UndefinedMetricError):
        scatter_ratio(f, [0, 0, 0, 0])
