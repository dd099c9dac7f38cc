"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from affgraph import _pykernels as py

ck = pytest.importorskip("affgraph._ckernels")


def _boxes(rng, n):
    xy = rng.uniform(0, 50, size=(n, 2))
    wh = rng.uniform(1, 20, size=(n, 2))
    return np.hstack([xy, xy + wh])


def test_pairwise_iou_backends_agree(rng):
    a, b = _boxes(rng, 30), _boxes(rng, 11)
    np.testing.assert_allclose(ck.pairwise_iou(a, b), py.pairwise_iou(a, b), rtol=0, atol=1e-14)


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-4)])
def test_l2_affinity_backends_agree(rng, dtype, tol):
    f = rng.normal(size=(17, 6)).astype(dtype)
    g = rng.normal(size=(17, 17)).astype(dtype)
    c, p = ck.l2_affinity(f), py.l2_affinity(f)
    assert c.dtype == dtype
    np.testing.assert_allclose(c, p, rtol=tol, atol=tol)
    np.testing.assert_array_equal(c, c.T)
    np.testing.assert_allclose(ck.l2_affinity_backward(f, g), py.l2_affinity_backward(f, g), rtol=tol, atol=tol)


@pytest.mark.parametrize("rowwise", [False, True])
@pytest.mark.parametrize("mask", [False, True])
def test_normalize_and_backward_agree(rng, rowwise, mask):
    raw = rng.normal(scale=3, size=(9, 9))
    t = (rng.random((9, 9)) < 0.3).astype(np.float64)
    np.fill_diagonal(t, 0)
    wc, rc, mc, nc = ck.normalize_mass(raw, t, rowwise, mask)
    wp, rp, mp, np_ = py.normalize_mass(raw, t, rowwise, mask)
    np.testing.assert_allclose(wc, wp, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(rc, rp, rtol=1e-12, atol=1e-15)
    assert mc == pytest.approx(mp, rel=1e-12) and nc == np_
    coef = rng.normal(size=9)
    np.testing.assert_allclose(ck.mass_backward(wc, t, coef, rowwise), py.mass_backward(wp, t, coef, rowwise), atol=1e-14)
    if mask:
        assert np.all(np.diag(wc) == 0)


def test_backend_selection_env(monkeypatch):
    import importlib

    import affgraph.kernels as k

    monkeypatch.setenv("AFFGRAPH_PURE_PYTHON", "1")
    importlib.reload(k)
    assert k.BACKEND == "python"
    monkeypatch.delenv("AFFGRAPH_PURE_PYTHON")
    importlib.reload(k)
    assert k.BACKEND == "cython"
