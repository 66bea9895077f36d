"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and results; ``nona.kernels`` picks one at import time.
"""
import numpy as np

_CHUNK_ELEMS = 1 << 20


def _row_chunks(n_rows, per_row):
    step = max(1, _CHUNK_ELEMS // max(per_row, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


def pairwise_l2(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    for rows in _row_chunks(A.shape[0], B.shape[0] * A.shape[1]):
        diff = A[rows, None, :] - B[None, :, :]
        out[rows] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def pairwise_l2_backward(A, B, D, G, eps):
    # d D_ij / d a_i = (a_i - b_j) / sqrt(D_ij^2 + eps)
    coef = G / np.sqrt(D * D + eps)
    gA = coef.sum(axis=1)[:, None] * A - coef @ B
    gB = coef.sum(axis=0)[:, None] * B - coef.T @ A
    return gA, gB


def pairwise_l1(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    for rows in _row_chunks(A.shape[0], B.shape[0] * A.shape[1]):
        out[rows] = np.abs(A[rows, None, :] - B[None, :, :]).sum(axis=2)
    return out


def pairwise_l1_backward(A, B, G):
    gA = np.zeros_like(A)
    gB = np.zeros_like(B)
    for rows in _row_chunks(A.shape[0], B.shape[0] * A.shape[1]):
        s = np.sign(A[rows, None, :] - B[None, :, :]) * G[rows, :, None]
        gA[rows] = s.sum(axis=1)
        gB -= s.sum(axis=0)
    return gA, gB


def knn_indices(D, k):
    """Indices of the ``k`` smallest entries per row; ties go to the lower index."""
    return np.argsort(D, axis=1, kind="stable")[:, :k].astype(np.intp)


def triplet_grid_argmin(d_ij, d_ik, R, step):
    """Grid minimiser of ``(d_ij p + d_ik (R - p))**2`` over ``p`` in ``[0, R]``.

    The grid has ``ceil(R / step)`` equal intervals, both endpoints included.
    Returns ``(p_best, objective_best)`` arrays; the first minimiser wins ties.
    """
    n_inst = len(d_ij)
    p_best = np.empty(n_inst)
    f_best = np.empty(n_inst)
    for i in range(n_inst):
        n = int(np.ceil(R[i] / step - 1e-9))
        p = R[i] * np.arange(n + 1) / n
        f = (d_ij[i] * p + d_ik[i] * (R[i] - p)) ** 2
        m = int(np.argmin(f))
        p_best[i] = p[m]
        f_best[i] = f[m]
    return p_best, f_best
