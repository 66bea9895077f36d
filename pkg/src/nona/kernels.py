"""Hot-loop kernels: the compiled extension when available, numpy otherwise.

Set ``NONA_PURE_PYTHON=1`` before import to force the numpy fallback.
``BACKEND`` names the implementation in use.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("NONA_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def pairwise_l2(A, B):
    return _impl.pairwise_l2(_c(A), _c(B))


def pairwise_l2_backward(A, B, D, G, eps):
    # reduces to two matrix products, where BLAS beats the hand-written loop
    return _pykernels.pairwise_l2_backward(_c(A), _c(B), _c(D), _c(G), float(eps))


def pairwise_l1(A, B):
    return _impl.pairwise_l1(_c(A), _c(B))


def pairwise_l1_backward(A, B, G):
    return _impl.pairwise_l1_backward(_c(A), _c(B), _c(G))


def knn_indices(D, k):
    return np.asarray(_impl.knn_indices(_c(D), int(k)))


def triplet_grid_argmin(d_ij, d_ik, R, step):
    return _impl.triplet_grid_argmin(_c(d_ij), _c(d_ik), _c(R), float(step))
