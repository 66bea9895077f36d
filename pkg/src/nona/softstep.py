"""SoftStep: learned, differentiable masking of neighbor similarities.

The two function families map a min-max normalised similarity ``x`` in
``[0, 1]`` to a mask value in ``[0, 1]``:

* ``S1(x; a, b, t)`` is 0 on ``[0, a]``, 1 on ``[b, 1]`` and the blend
  ``u**(1/t) / (u**(1/t) + v**(1/t))`` with ``u = x - a``, ``v = b - x``
  in between.  Small ``t`` approaches a step at ``(a + b) / 2``, ``t``
  near 1 the straight ramp from ``(a, 0)`` to ``(b, 1)``.
* ``S2(x; b, t) = (x / b) ** ((b - x) t / (1 - t))`` below ``b`` and 1 above.

The mask enters the attention scores additively as ``log(mask)``, so a
zero mask is a hard ``-inf`` rejection.  Both families are implemented
directly in log space: ``log S1 = -softplus(-(log u - log v) / t)`` never
overflows, even for ``1/t = 1000``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tensor import (
    ContractError,
    DomainError,
    Parameter,
    Tensor,
    _as_tensor,
    _record,
    add,
    clamp,
    exp,
    index,
    matmul,
    minimum,
    reshape,
    row_max,
    sigmoid,
    unbroadcast,
)


class SoftStepFamily(str, Enum):
    S1 = "s1"
    S2 = "s2"
    NONE = "none"


class ParamMode(str, Enum):
    GLOBAL = "global"
    POINTWISE = "pointwise"


class ParameterOrderError(ValueError):
    """SoftStep lower threshold ``a`` is not below the upper threshold ``b``."""


@dataclass
class SoftStepConfig:
    family: SoftStepFamily = SoftStepFamily.S2
    param_mode: ParamMode = ParamMode.POINTWISE
    epsilon: float = 1e-6
    t_clamp: float = 1e-3

    def __post_init__(self):
        self.family = SoftStepFamily(self.family)
        self.param_mode = ParamMode(self.param_mode)
        if not self.epsilon > 0:
            raise ContractError("softstep.epsilon must be positive")
        if not 0 < self.t_clamp < 0.5:
            raise ContractError("softstep.t_clamp must lie in (0, 0.5)")


# sigmoid outputs (a0, b0, t) at initialisation
INIT_PARAMS = (0.1, 0.9, 0.5)


def _logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def s1_logmask(x, a, b, t) -> Tensor:
    """``log S1(x; a, b, t)`` elementwise with broadcasting over all operands."""
    x, a, b, t = (_as_tensor(v) for v in (x, a, b, t))
    X, A, B, T = np.broadcast_arrays(x.data, a.data, b.data, t.data)
    if (A >= B).any():
        raise ParameterOrderError("S1 needs a < b")
    if ((T <= 0) | (T >= 1)).any():
        raise DomainError("S1 needs t in (0, 1)")
    lo = X <= A
    hi = X >= B
    mid = ~(lo | hi)
    u = np.where(mid, X - A, 1.0)
    v = np.where(mid, B - X, 1.0)
    z = (np.log(u) - np.log(v)) / T
    out = np.where(lo, -np.inf, np.where(hi, 0.0, -_softplus(-z)))

    def backward(g):
        g = np.where(mid, g, 0.0)
        # d log S1 / dz = 1 - S1 = sigmoid(-z)
        gz = g * np.exp(-_softplus(z))
        gx = gz * (1.0 / u + 1.0 / v) / T
        ga = -gz / (u * T)
        gb = -gz / (v * T)
        gt = -gz * z / T
        return (unbroadcast(gx, x.shape), unbroadcast(ga, a.shape),
                unbroadcast(gb, b.shape), unbroadcast(gt, t.shape))

    return _record(out, (x, a, b, t), backward, allow_neginf=True)


def s2_logmask(x, b, t) -> Tensor:
    """``log S2(x; b, t)`` elementwise; ``0 ** positive = 0`` gives ``-inf``."""
    x, b, t = (_as_tensor(v) for v in (x, b, t))
    X, B, T = np.broadcast_arrays(x.data, b.data, t.data)
    if ((B <= 0) | (B > 1)).any():
        raise DomainError("S2 needs b in (0, 1]")
    if ((T <= 0) | (T >= 1)).any():
        raise DomainError("S2 needs t in (0, 1)")
    if (X < 0).any():
        raise DomainError("S2 needs x >= 0")
    k = T / (1.0 - T)
    expo = np.where(X < B, (B - X) * k, 0.0)
    zero_x = (X == 0) & (expo > 0)
    live = (X < B) & (X > 0) & (expo > 0)
    lr = np.where(live, np.log(np.where(live, X, 1.0)) - np.log(B), 0.0)
    out = np.where(zero_x, -np.inf, expo * lr)

    def backward(g):
        g = np.where(live, g, 0.0)
        Xs = np.where(live, X, 1.0)
        gx = g * (-k * lr + expo / Xs)
        gb = g * (k * lr - expo / B)
        gt = g * (B - X) * lr / (1.0 - T) ** 2
        return (unbroadcast(gx, x.shape), unbroadcast(gb, b.shape), unbroadcast(gt, t.shape))

    return _record(out, (x, b, t), backward, allow_neginf=True)


def s1(x, a, b, t) -> Tensor:
    """Mask value ``S1(x; a, b, t)``; differentiable on ``a < x < b``."""
    return exp(s1_logmask(x, a, b, t))


def s2(x, b, t) -> Tensor:
    """Mask value ``S2(x; b, t)``; differentiable on ``0 < x < b``."""
    return exp(s2_logmask(x, b, t))


def minmax_normalize(sim, exclude=None) -> Tensor:
    """Affinely rescale each row of ``sim`` to ``[0, 1]``.

    ``exclude`` is a boolean mask of entries left out of the row min/max
    (the self-similarity during training); those entries come out as 0.
    For a 1-D row it may also be an integer index.  A row whose eligible
    entries are all equal maps them to 1, so nothing gets rejected.
    """
    sim = _as_tensor(sim)
    if sim.ndim == 1:
        if exclude is not None and not isinstance(exclude, np.ndarray):
            excl = np.zeros(sim.shape, dtype=bool)
            excl[int(exclude)] = True
            exclude = excl
        out = minmax_normalize(reshape(sim, (1, -1)),
                               None if exclude is None else np.asarray(exclude)[None, :])
        return reshape(out, sim.shape)

    S = sim.data
    excl = np.zeros(S.shape, dtype=bool) if exclude is None else np.asarray(exclude, dtype=bool)
    if (~excl).sum(axis=1).min(initial=1) < 1:
        raise ContractError("min-max normalisation needs at least one eligible entry per row")
    rows = np.arange(S.shape[0])
    arg_min = np.where(excl, np.inf, S).argmin(axis=1)
    arg_max = np.where(excl, -np.inf, S).argmax(axis=1)
    mn = S[rows, arg_min][:, None]
    mx = S[rows, arg_max][:, None]
    span = mx - mn
    flat = span[:, 0] == 0
    safe = np.where(span == 0, 1.0, span)
    out = np.where(excl, 0.0, np.where(flat[:, None], 1.0, (S - mn) / safe))

    def backward(g):
        g = np.where(excl | flat[:, None], 0.0, g)
        gx = g / safe
        g_mn = (g * (out - 1.0) / safe).sum(axis=1)
        g_mx = (-g * out / safe).sum(axis=1)
        np.add.at(gx, (rows, arg_min), g_mn)
        np.add.at(gx, (rows, arg_max), g_mx)
        return (gx,)

    return _record(out, (sim,), backward)


class SoftStep:
    """Parameter holder and forward pass of the SoftStep masking block.

    In ``global`` mode three unconstrained scalars pass through a sigmoid to
    give ``(a0, b0, t)``; in ``pointwise`` mode an affine map of each
    embedding followed by a sigmoid gives one triple per prediction point.
    """

    def __init__(self, config: SoftStepConfig, embedding_dim: int):
        self.config = config
        self.embedding_dim = embedding_dim
        self.params: dict[str, Parameter] = {}
        init = _logit(INIT_PARAMS)
        if config.family is SoftStepFamily.NONE:
            return
        if config.param_mode is ParamMode.GLOBAL:
            self.params["softstep.raw"] = Parameter(init, name="softstep.raw")
        else:
            self.params["softstep.weight"] = Parameter(np.zeros((embedding_dim, 3)), name="softstep.weight")
            self.params["softstep.bias"] = Parameter(init, name="softstep.bias")

    def parameters(self) -> dict:
        return dict(self.params)

    def mask_params(self, Z):
        """Return ``(a0, b0, t)`` as column tensors, ``t`` already clamped."""
        if self.config.family is SoftStepFamily.NONE:
            raise ContractError("SoftStep is disabled; it has no mask parameters")
        if self.config.param_mode is ParamMode.GLOBAL:
            vals = reshape(sigmoid(self.params["softstep.raw"]), (1, 3))
        else:
            vals = sigmoid(add(matmul(Z, self.params["softstep.weight"]), self.params["softstep.bias"]))
        a0 = index(vals, (slice(None), slice(0, 1)))
        b0 = index(vals, (slice(None), slice(1, 2)))
        t = index(vals, (slice(None), slice(2, 3)))
        tc = self.config.t_clamp
        return a0, b0, clamp(t, tc, 1.0 - tc)

    def __call__(self, Z, sim, sim_norm, training: bool) -> Tensor:
        return softstep_logmask(Z, sim, sim_norm, self, training)


def softstep_logmask(Z, sim, sim_norm, module: SoftStep, training: bool) -> Tensor:
    """Scores ``sim + log(mask)`` with the mask computed from ``sim_norm``.

    For S1 the lower threshold is pulled just under each row's top
    normalised similarity (``a = min(a0, top) - epsilon``) and ``b`` is
    placed a fraction ``b0`` of the way from ``a`` to 1, so the most similar
    neighbor always survives.  S2 uses ``b0`` and ``t`` directly.  During
    training the diagonal is excluded from the row top.
    """
    cfg = module.config
    if cfg.family is SoftStepFamily.NONE:
        return sim
    a0, b0, t = module.mask_params(Z)
    if cfg.family is SoftStepFamily.S1:
        exclude = np.eye(*sim_norm.shape, dtype=bool) if training else None
        top = row_max(sim_norm, exclude)
        a = minimum(a0, top) - cfg.epsilon
        b = a + b0 * (1.0 - a)
        logmask = s1_logmask(sim_norm, a, b, t)
    else:
        logmask = s2_logmask(sim_norm, b0, t)
    return add(sim, logmask)
