"""Pairwise similarity matrices between prediction and neighbor embeddings."""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import kernels
from .tensor import DomainError, ShapeError, Tensor, _as_tensor, _record, matmul, sqrt, sum_, transpose

# Only enters the gradient denominator: the forward distance stays exact.
L2_GRAD_EPS = 1e-12


class SimilarityKind(str, Enum):
    NEG_L2 = "neg_l2"
    NEG_L1 = "neg_l1"
    DOT = "dot"
    COSINE = "cosine"


def _neg_l2(Z, ZN):
    D = kernels.pairwise_l2(Z.data, ZN.data)

    def backward(g):
        gA, gB = kernels.pairwise_l2_backward(Z.data, ZN.data, D, -g, L2_GRAD_EPS)
        return gA, gB

    return _record(-D, (Z, ZN), backward)


def _neg_l1(Z, ZN):
    D = kernels.pairwise_l1(Z.data, ZN.data)

    def backward(g):
        return kernels.pairwise_l1_backward(Z.data, ZN.data, -g)

    return _record(-D, (Z, ZN), backward)


def _unit_rows(X):
    norms = np.sqrt((X.data * X.data).sum(axis=1))
    if (norms == 0).any():
        raise DomainError("cosine similarity is undefined for a zero-norm embedding")
    return X / sqrt(sum_(X * X, axis=1, keepdims=True))


def pairwise_similarity(kind, Z, ZN) -> Tensor:
    """Return the ``b x N`` matrix ``sim(Z[i], ZN[j])``.

    ``neg_l2`` and ``neg_l1`` are negated distances, ``dot`` the raw inner
    product (no 1/sqrt(d) scaling) and ``cosine`` the normalised one.
    """
    kind = SimilarityKind(kind)
    Z, ZN = _as_tensor(Z), _as_tensor(ZN)
    if Z.ndim != 2 or ZN.ndim != 2:
        raise ShapeError("embeddings must be matrices")
    if Z.shape[1] != ZN.shape[1] or Z.shape[1] < 1:
        raise ShapeError(f"embedding dimensions differ: {Z.shape[1]} vs {ZN.shape[1]}")
    if kind is SimilarityKind.NEG_L2:
        return _neg_l2(Z, ZN)
    if kind is SimilarityKind.NEG_L1:
        return _neg_l1(Z, ZN)
    if kind is SimilarityKind.DOT:
        return matmul(Z, transpose(ZN))
    return matmul(_unit_rows(Z), transpose(_unit_rows(ZN)))
