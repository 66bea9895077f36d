"""Trainable feature extractor and the dense regression head."""
from __future__ import annotations

import numpy as np

from .tensor import Parameter, ShapeError, Tensor, _as_tensor, add, matmul, relu, reshape, transpose


class Mlp:
    """Stack of affine layers, ReLU between them, identity on the last.

    ``depth`` counts hidden layers, so the stack has ``depth + 1`` affine
    maps: ``input_dim -> hidden_dim (x depth) -> embedding_dim``.  Weights are
    stored ``(out, in)`` and drawn uniformly from ``+-1/sqrt(fan_in)``.
    """

    def __init__(self, input_dim: int, hidden_dim: int = 200, embedding_dim: int = 25,
                 depth: int = 2, rng: np.random.Generator | None = None):
        if min(input_dim, embedding_dim) < 1 or depth < 0 or (depth and hidden_dim < 1):
            raise ValueError("layer dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.embedding_dim = embedding_dim
        self.depth = depth
        dims = [input_dim] + [hidden_dim] * depth + [embedding_dim]
        self.layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = Parameter(rng.uniform(-bound, bound, size=(fan_out, fan_in)), name=f"mlp.{i}.weight")
            b = Parameter(rng.uniform(-bound, bound, size=fan_out), name=f"mlp.{i}.bias")
            act = "identity" if i == len(dims) - 2 else "relu"
            self.layers.append((w, b, act))

    def parameters(self) -> dict:
        out = {}
        for w, b, _ in self.layers:
            out[w.name] = w
            out[b.name] = b
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def __call__(self, X) -> Tensor:
        return embed(self, X)


def embed(mlp: Mlp, X) -> Tensor:
    X = _as_tensor(X)
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ShapeError(f"expected inputs of width {mlp.input_dim}, got shape {X.shape}")
    h = X
    for w, b, act in mlp.layers:
        h = add(matmul(h, transpose(w)), b)
        if act == "relu":
            h = relu(h)
    return h


class DenseHead:
    """Affine regression head ``y = Z w^T + bias``."""

    def __init__(self, embedding_dim: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(embedding_dim)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(1, embedding_dim)), name="dense.weight")
        self.bias = Parameter(rng.uniform(-bound, bound, size=1), name="dense.bias")

    def parameters(self) -> dict:
        return {"dense.weight": self.weight, "dense.bias": self.bias}

    def __call__(self, Z) -> Tensor:
        return dense_predict(self, Z)


def dense_predict(head: DenseHead, Z) -> Tensor:
    Z = _as_tensor(Z)
    if Z.ndim != 2 or Z.shape[1] != head.weight.shape[1]:
        raise ShapeError(f"expected embeddings of width {head.weight.shape[1]}, got {Z.shape}")
    return reshape(add(matmul(Z, transpose(head.weight)), head.bias), (Z.shape[0],))
