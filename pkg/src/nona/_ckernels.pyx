# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
from libc.math cimport sqrt, fabs, ceil


def pairwise_l2(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, t
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = A[i, k] - B[j, k]
                    acc = acc + t * t
                o[i, j] = sqrt(acc)
    return out


def pairwise_l2_backward(const double[:, ::1] A, const double[:, ::1] B,
                         const double[:, ::1] D, const double[:, ::1] G,
                         double eps):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double c, t
    gA_arr = np.zeros((n, d))
    gB_arr = np.zeros((m, d))
    cdef double[:, ::1] gA = gA_arr
    cdef double[:, ::1] gB = gB_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                c = G[i, j]
                if c == 0.0:
                    continue
                c = c / sqrt(D[i, j] * D[i, j] + eps)
                for k in range(d):
                    t = c * (A[i, k] - B[j, k])
                    gA[i, k] += t
                    gB[j, k] -= t
    return gA_arr, gB_arr


def pairwise_l1(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    acc = acc + fabs(A[i, k] - B[j, k])
                o[i, j] = acc
    return out


def pairwise_l1_backward(const double[:, ::1] A, const double[:, ::1] B,
                         const double[:, ::1] G):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double c, t
    gA_arr = np.zeros((n, d))
    gB_arr = np.zeros((m, d))
    cdef double[:, ::1] gA = gA_arr
    cdef double[:, ::1] gB = gB_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                c = G[i, j]
                if c == 0.0:
                    continue
                for k in range(d):
                    t = A[i, k] - B[j, k]
                    if t > 0.0:
                        gA[i, k] += c
                        gB[j, k] -= c
                    elif t < 0.0:
                        gA[i, k] -= c
                        gB[j, k] += c
    return gA_arr, gB_arr


def knn_indices(const double[:, ::1] D, Py_ssize_t k):
    cdef Py_ssize_t n = D.shape[0], m = D.shape[1]
    cdef Py_ssize_t i, j, s, pos
    cdef double v
    out = np.empty((n, k), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] idx = out
    # sorted insertion into a k-slot buffer; strict < keeps earlier indices first on ties
    buf_arr = np.empty(k)
    cdef double[::1] buf = buf_arr
    with nogil:
        for i in range(n):
            s = 0
            for j in range(m):
                v = D[i, j]
                if s == k and not (v < buf[k - 1]):
                    continue
                pos = s if s < k else k - 1
                while pos > 0 and v < buf[pos - 1]:
                    buf[pos] = buf[pos - 1]
                    idx[i, pos] = idx[i, pos - 1]
                    pos -= 1
                buf[pos] = v
                idx[i, pos] = j
                if s < k:
                    s += 1
    return out


def triplet_grid_argmin(const double[::1] d_ij, const double[::1] d_ik,
                        const double[::1] R, double step):
    cdef Py_ssize_t n_inst = d_ij.shape[0]
    cdef Py_ssize_t i, m, n, best
    cdef double p, f, fb, pb
    p_arr = np.empty(n_inst)
    f_arr = np.empty(n_inst)
    cdef double[::1] p_best = p_arr
    cdef double[::1] f_best = f_arr
    with nogil:
        for i in range(n_inst):
            n = <Py_ssize_t>ceil(R[i] / step - 1e-9)
            fb = 1e308
            pb = 0.0
            for m in range(n + 1):
                p = R[i] * m / n
                f = d_ij[i] * p + d_ik[i] * (R[i] - p)
                f = f * f
                if f < fb:
                    fb = f
                    pb = p
            p_best[i] = pb
            f_best[i] = fb
    return p_arr, f_arr
