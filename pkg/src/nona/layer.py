"""The NONA regression head: softmax attention over neighbor labels."""
from __future__ import annotations

import numpy as np

from .similarity import SimilarityKind, pairwise_similarity
from .softstep import SoftStep, SoftStepConfig, SoftStepFamily, minmax_normalize
from .tensor import ContractError, Tensor, _as_tensor, masked_fill, matmul, rowwise_softmax


class NotFittedError(RuntimeError):
    """Inference was requested before a neighbor bank was set."""


class BatchTooSmallError(ValueError):
    """Self-masked training needs at least two points per batch."""


class NonaHead:
    """Predicts each label as an attention-weighted mean of neighbor labels.

    During training the batch is its own neighbor set and the diagonal is
    masked to ``-inf`` so no point sees its own label.  At inference the
    neighbors come from a frozen bank of training embeddings and labels.
    """

    def __init__(self, similarity="neg_l2", softstep: SoftStepConfig | None = None,
                 embedding_dim: int = 25):
        self.similarity = SimilarityKind(similarity)
        self.softstep_config = softstep or SoftStepConfig(family=SoftStepFamily.NONE)
        self.softstep = SoftStep(self.softstep_config, embedding_dim)
        self.bank_z: np.ndarray | None = None
        self.bank_y: np.ndarray | None = None

    def parameters(self) -> dict:
        return self.softstep.parameters()

    @property
    def fitted(self) -> bool:
        return self.bank_z is not None

    def scores(self, Z, ZN, training: bool) -> Tensor:
        """Pre-softmax scores: similarity, SoftStep log-mask, then the self mask."""
        sim = pairwise_similarity(self.similarity, Z, ZN)
        diag = np.eye(*sim.shape, dtype=bool) if training else None
        if self.softstep_config.family is not SoftStepFamily.NONE:
            sim_norm = minmax_normalize(sim, diag)
            sim = self.softstep(Z, sim, sim_norm, training)
        if training:
            sim = masked_fill(sim, diag, -np.inf)
        return sim

    def attention(self, Z, ZN=None, training: bool = False) -> Tensor:
        Z = _as_tensor(Z)
        if training:
            return rowwise_softmax(self.scores(Z, Z, True))
        if ZN is None:
            if not self.fitted:
                raise NotFittedError("neighbor bank is empty; call set_neighbor_bank first")
            ZN = Tensor(self.bank_z)
        return rowwise_softmax(self.scores(Z, ZN, False))

    def forward_train(self, Z, y) -> Tensor:
        Z = _as_tensor(Z)
        y = np.asarray(y, dtype=np.float64)
        if Z.shape[0] < 2:
            raise BatchTooSmallError("training batches need at least two points")
        if len(y) != Z.shape[0]:
            raise ContractError("label count does not match batch size")
        return matmul(self.attention(Z, training=True), Tensor(y))

    def forward_infer(self, Z) -> Tensor:
        if not self.fitted:
            raise NotFittedError("neighbor bank is empty; call set_neighbor_bank first")
        return matmul(self.attention(Z), Tensor(self.bank_y))

    def forward_with_neighbors(self, Z, ZN, yN) -> Tensor:
        """Inference against an explicit neighbor set instead of the bank."""
        return matmul(self.attention(Z, ZN), Tensor(np.asarray(yN, dtype=np.float64)))

    def set_neighbor_bank(self, ZN, yN) -> "NonaHead":
        ZN = np.array(ZN.data if isinstance(ZN, Tensor) else ZN, dtype=np.float64)
        yN = np.array(yN, dtype=np.float64).reshape(-1)
        if ZN.ndim != 2 or ZN.shape[0] < 1:
            raise NotFittedError("neighbor bank needs at least one embedding")
        if ZN.shape[0] != len(yN):
            raise ContractError(f"bank has {ZN.shape[0]} embeddings but {len(yN)} labels")
        ZN.setflags(write=False)
        yN.setflags(write=False)
        self.bank_z, self.bank_y = ZN, yN
        return self

    def clear_neighbor_bank(self) -> None:
        self.bank_z = self.bank_y = None
