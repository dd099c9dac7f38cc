"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``AFFGRAPH_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("AFFGRAPH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

pairwise_iou = _impl.pairwise_iou
l2_affinity = _impl.l2_affinity
l2_affinity_backward = _impl.l2_affinity_backward
normalize_mass = _impl.normalize_mass
mass_backward = _impl.mass_backward
