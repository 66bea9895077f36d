"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active, and touching at least
one tensor that requires a gradient, are appended to that tape together with
a backward rule.  ``tape.backward(loss)`` then walks the nodes in reverse
recording order, which is a valid reverse topological order because a node
can only consume tensors that already exist.

Only score matrices fed to :func:`rowwise_softmax` may hold ``-inf``; with
:func:`set_debug` enabled every other op checks its output is finite.
"""
from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An operand lies outside the mathematical domain of the operation."""


class DegenerateRowError(ValueError):
    """A softmax row was masked entirely to ``-inf``."""


class ContractError(ValueError):
    """A documented precondition was violated."""


_DEBUG = False


def set_debug(flag: bool) -> None:
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    """Immutable n-dimensional array of float64 values."""

    __slots__ = ("_data", "requires_grad", "grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self._data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad):
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        t._data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self._data.reshape(()))

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self._data!r}{tag})"

    def __len__(self):
        return len(self._data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return power(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A trainable leaf.  Only optimizers call :meth:`assign`."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)

    def assign(self, values) -> None:
        arr = np.array(values, dtype=np.float64)
        if arr.shape != self._data.shape:
            raise ShapeError(f"cannot assign shape {arr.shape} to parameter of shape {self.shape}")
        arr.setflags(write=False)
        self._data = arr


class Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


_ACTIVE: contextvars.ContextVar[Tape | None] = contextvars.ContextVar("nona_tape", default=None)


class Tape:
    """Append-only record of differentiable operations.

    Use as a context manager; tapes nest, the innermost one records.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def record(self, inputs, output, backward):
        self.nodes.append(Node(inputs, output, backward))

    def backward(self, loss: Tensor) -> dict:
        """Accumulate d(loss)/d(leaf) for every grad-requiring leaf on the tape.

        Returns a dict keyed by leaf tensor; the same arrays are also stored
        on each leaf's ``.grad``.
        """
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise ContractError("backward() needs a scalar loss tensor")
        if not any(node.output is loss for node in self.nodes):
            raise ContractError("loss was not produced on this tape")

        grads = {id(loss): np.ones_like(loss.data)}
        produced = {id(node.output) for node in self.nodes}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if key not in produced:
                    leaves[key] = inp

        result = {}
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g
            result[leaf] = g
        return result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, inputs: Sequence[Tensor], backward: Callable, allow_neginf: bool = False) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    if _DEBUG and not allow_neginf and not np.all(np.isfinite(out.data)):
        raise DomainError("non-finite value produced outside the masking path")
    if requires:
        tape = _ACTIVE.get()
        if tape is not None:
            tape.record(tuple(inputs), out, backward)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast") from exc


def _safe_mul(g, x):
    # 0 * inf must stay 0 so masked entries carry no gradient
    with np.errstate(invalid="ignore"):
        out = g * x
    return np.where(g == 0, 0.0, out)


# ---- elementwise binary -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    neginf = bool(np.isneginf(a.data).any() or np.isneginf(b.data).any())
    return _record(a.data + b.data, (a, b), backward, allow_neginf=neginf)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def backward(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return _record(out, (a, b), backward)


def minimum(a, b) -> Tensor:
    """Elementwise minimum; on ties the gradient goes to ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)
    pick_a = a.data <= b.data

    def backward(g):
        return (unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                unbroadcast(np.where(pick_a, 0.0, g), b.shape))

    return _record(np.minimum(a.data, b.data), (a, b), backward)


def maximum(a, b) -> Tensor:
    """Elementwise maximum; on ties the gradient goes to ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b)
    pick_a = a.data >= b.data

    def backward(g):
        return (unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                unbroadcast(np.where(pick_a, 0.0, g), b.shape))

    return _record(np.maximum(a.data, b.data), (a, b), backward)


def power(x, t) -> Tensor:
    """``x ** t`` for tensor or scalar exponents.

    Raises DomainError for a negative base under a non-integer exponent.
    """
    x, t = _as_tensor(x), _as_tensor(t)
    _broadcast_shape(x, t)
    xb, tb = np.broadcast_arrays(x.data, t.data)
    bad = (xb < 0) & (tb != np.round(tb))
    if bad.any():
        raise DomainError("negative base with non-integer exponent")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(xb, tb)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = tb * np.power(xb, tb - 1.0)
            dt = np.where(xb > 0, out * np.log(np.where(xb > 0, xb, 1.0)), 0.0)
        return unbroadcast(_safe_mul(g, dx), x.shape), unbroadcast(_safe_mul(g, dt), t.shape)

    return _record(out, (x, t), backward)


# ---- elementwise unary --------------------------------------------------


def neg(x) -> Tensor:
    x = _as_tensor(x)
    return _record(-x.data, (x,), lambda g: (-g,))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _record(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    """Natural log; ``log(0) = -inf`` with zero gradient wherever upstream is zero."""
    x = _as_tensor(x)
    if (x.data < 0).any():
        raise DomainError("log of a negative value")
    with np.errstate(divide="ignore"):
        out = np.log(x.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(g == 0, 0.0, g / x.data),)

    return _record(out, (x,), backward, allow_neginf=True)


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    if (x.data < 0).any():
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(x.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(g == 0, 0.0, g / (2.0 * out)),)

    return _record(out, (x,), backward)


def abs_(x) -> Tensor:
    """Absolute value with subgradient ``sign(0) = 0``."""
    x = _as_tensor(x)
    return _record(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    # two-branch form avoids overflow in exp for large |x|
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    on = x.data > 0
    return _record(np.where(on, x.data, 0.0), (x,), lambda g: (np.where(on, g, 0.0),))


def clamp(x, lo=None, hi=None) -> Tensor:
    """Clip into ``[lo, hi]``; gradient is zero where clipping was active."""
    x = _as_tensor(x)
    out = np.clip(x.data, lo, hi)
    inside = out == x.data
    return _record(out, (x,), lambda g: (np.where(inside, g, 0.0),))


# ---- shape and reduction -------------------------------------------------


def broadcast_to(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {x.shape} to {tuple(shape)}") from exc
    return _record(out.copy(), (x,), lambda g: (unbroadcast(g, x.shape),))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return _record(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _record(x.data.T.copy(), (x,), lambda g: (g.T,))


def index(x, key) -> Tensor:
    x = _as_tensor(x)
    out = x.data[key]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return _record(np.array(out), (x,), backward)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(out, (x,), backward)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeError(f"matmul expects a matrix on the left, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        if b.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, (a, b), backward)


def masked_fill(x, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by ``value``; they get no gradient."""
    x = _as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, value, x.data)
    return _record(out, (x,), lambda g: (np.where(mask, 0.0, g),),
                   allow_neginf=np.isneginf(value) or bool(np.isneginf(x.data).any()))


def rowwise_softmax(s) -> Tensor:
    """Softmax over the last axis of a matrix, stabilised by the row max.

    ``-inf`` entries map to exactly 0 and receive zero gradient.  A row with
    no finite entry raises DegenerateRowError.
    """
    s = _as_tensor(s)
    if s.ndim != 2:
        raise ShapeError("rowwise_softmax expects a matrix")
    if np.isnan(s.data).any() or np.isposinf(s.data).any():
        raise DomainError("softmax scores must be finite or -inf")
    row_max = s.data.max(axis=1, keepdims=True)
    if np.isneginf(row_max).any():
        bad = np.flatnonzero(np.isneginf(row_max[:, 0]))
        raise DegenerateRowError(f"rows {bad.tolist()} are fully masked")
    e = np.exp(s.data - row_max)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (p * (g - (p * g).sum(axis=1, keepdims=True)),)

    return _record(p, (s,), backward)


def row_max(x, exclude=None) -> Tensor:
    """Max over each matrix row, skipping entries where ``exclude`` is true.

    Returns a ``(rows, 1)`` tensor; the gradient flows to the first argmax.
    """
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("row_max expects a matrix")
    vals = x.data if exclude is None else np.where(exclude, -np.inf, x.data)
    arg = vals.argmax(axis=1)
    rows = np.arange(x.shape[0])
    out = vals[rows, arg][:, None]
    if np.isneginf(out).any():
        raise ContractError("row_max over a row with no eligible entries")

    def backward(g):
        full = np.zeros_like(x.data)
        full[rows, arg] = g[:, 0]
        return (full,)

    return _record(out, (x,), backward)
