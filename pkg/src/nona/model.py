"""Feature extractor plus regression head, assembled from a config."""
from __future__ import annotations

import numpy as np

from .layer import NonaHead
from .mlp import DenseHead, Mlp
from .tensor import Tensor


class Regressor:
    """An :class:`Mlp` followed by either a dense or a NONA head."""

    def __init__(self, head_kind: str, mlp: Mlp, head):
        self.head_kind = head_kind
        self.mlp = mlp
        self.head = head

    def parameters(self) -> dict:
        params = self.mlp.parameters()
        params.update(self.head.parameters())
        return params

    def forward_train(self, X, y) -> Tensor:
        Z = self.mlp(X)
        if self.head_kind == "nona":
            return self.head.forward_train(Z, y)
        return self.head(Z)

    def embed(self, X) -> np.ndarray:
        return self.mlp(np.asarray(X, dtype=np.float64)).numpy()

    def refresh_bank(self, X_train, y_train) -> None:
        if self.head_kind == "nona":
            self.head.set_neighbor_bank(self.embed(X_train), y_train)

    def predict(self, X) -> np.ndarray:
        Z = self.mlp(np.asarray(X, dtype=np.float64))
        if self.head_kind == "nona":
            return self.head.forward_infer(Z).numpy()
        return self.head(Z).numpy()


def build_model(config, input_dim: int, rng: np.random.Generator) -> Regressor:
    m = config.model
    mlp = Mlp(input_dim, m.hidden_dim, m.embedding_dim, m.depth, rng=rng)
    if m.head == "nona":
        head = NonaHead(config.similarity, config.softstep, m.embedding_dim)
    else:
        head = DenseHead(m.embedding_dim, rng=rng)
    return Regressor(m.head, mlp, head)
