import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nona import tensor as T
from nona.tensor import (ContractError, DegenerateRowError, DomainError, Parameter, ShapeError, Tape,
                         Tensor)

from conftest import numeric_grad, rel_err, tape_grad


def test_matmul_examples():
    A = np.array([[1.0, 2], [3, 4]])
    assert np.array_equal(T.matmul(Tensor(np.eye(2)), Tensor(A)).numpy(), A)
    P = np.array([[1.0, 0], [0, 0]])
    out = T.matmul(Tensor(P), Tensor([[5.0, 6], [7, 8]])).numpy()
    assert np.array_equal(out, [[5, 6], [0, 0]])


def test_matmul_gradient_example():
    B = Tensor([[2.0], [3.0]])
    g = tape_grad(lambda A: T.sum_(T.matmul(A, B)), np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(g, [[2, 3]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_examples():
    np.testing.assert_allclose(T.rowwise_softmax(Tensor([[0.0, 0.0]])).numpy(), [[0.5, 0.5]])
    assert np.array_equal(T.rowwise_softmax(Tensor([[0.0, -np.inf]])).numpy(), [[1.0, 0.0]])
    np.testing.assert_allclose(T.rowwise_softmax(Tensor([[0.0, np.log(3)]])).numpy(), [[0.25, 0.75]],
                               rtol=0, atol=1e-15)


def test_softmax_fully_masked_row():
    with pytest.raises(DegenerateRowError):
        T.rowwise_softmax(Tensor([[0.0, 1.0], [-np.inf, -np.inf]]))


def test_softmax_masked_entries_get_no_gradient():
    mask = np.array([[False, True, False]])

    def f(x):
        p = T.rowwise_softmax(T.masked_fill(x, mask, -np.inf))
        return T.sum_(T.mul(p, Tensor([[1.0, 2.0, 3.0]])))

    g = tape_grad(f, np.array([[0.3, -0.1, 0.8]]))
    assert g[0, 1] == 0.0
    assert np.all(np.isfinite(g))


def test_elementwise_examples():
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    assert T.log(Tensor(1.0)).item() == 0.0
    g = tape_grad(lambda x: T.power(x, Tensor(0.5)), np.array(0.25))
    assert g == pytest.approx(1.0)


def test_power_domain_error():
    with pytest.raises(DomainError):
        T.power(Tensor(-1.0), Tensor(0.5))
    assert T.power(Tensor(-2.0), Tensor(2.0)).item() == 4.0


def test_backward_examples():
    assert tape_grad(lambda x: T.mul(x, x), np.array(3.0)) == 6.0
    # scores [a, 0] built as a * e1
    e1 = Tensor([[1.0, 0.0]])
    g = tape_grad(lambda a: T.sum_(T.rowwise_softmax(T.mul(a, e1))), np.array(0.7))
    assert abs(g) < 1e-15


def test_non_scalar_loss_rejected():
    x = Parameter(np.ones(3))
    with Tape() as tape:
        y = T.mul(x, x)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_loss_from_another_tape_rejected():
    x = Parameter(np.ones(3))
    with Tape():
        y = T.sum_(x)
    with Tape() as other:
        pass
    with pytest.raises(ContractError):
        other.backward(y)


def test_no_tape_means_no_recording():
    x = Parameter(np.ones(2))
    y = T.sum_(T.mul(x, x))
    assert y.item() == 2.0


def test_tensors_are_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0
    copy = t.numpy()
    copy[0] = 5.0
    assert t.data[0] == 1.0


def test_parameter_assign_shape_checked():
    p = Parameter(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        p.assign(np.zeros(3))


def test_log_zero_gives_neg_inf_without_nan_gradient():
    g = tape_grad(lambda x: T.sum_(T.rowwise_softmax(T.reshape(T.log(x), (1, 2)))), np.array([0.0, 1.0]))
    assert np.all(np.isfinite(g))


def test_debug_mode_flags_non_finite():
    T.set_debug(True)
    try:
        with pytest.raises(DomainError), np.errstate(divide="ignore"):
            T.div(Tensor(1.0), Tensor(0.0))
    finally:
        T.set_debug(False)


UNARY = {
    "exp": T.exp,
    "sigmoid": T.sigmoid,
    "neg": T.neg,
    "abs": T.abs_,
    "relu": T.relu,
    "clamp": lambda x: T.clamp(x, -0.5, 0.7),
    "log": lambda x: T.log(T.add(T.abs_(x), Tensor(0.5))),
    "sqrt": lambda x: T.sqrt(T.add(T.mul(x, x), Tensor(0.1))),
    "transpose": T.transpose,
    "index": lambda x: T.index(x, (slice(None), [0, 0, 2])),
    "mean_axis": lambda x: T.mean(x, axis=0),
    "row_max": lambda x: T.row_max(x),
    "softmax": T.rowwise_softmax,
}

BINARY = {
    "add": T.add,
    "sub": T.sub,
    "mul": T.mul,
    "div": lambda a, b: T.div(a, T.add(T.abs_(b), Tensor(0.5))),
    "minimum": T.minimum,
    "maximum": T.maximum,
    "power": lambda a, b: T.power(T.add(T.abs_(a), Tensor(0.5)), b),
    "matmul": lambda a, b: T.matmul(a, T.transpose(b)),
    "broadcast_add": lambda a, b: T.add(a, T.index(b, (slice(0, 1), slice(None)))),
}

WEIGHTS = np.random.default_rng(7).normal(size=(4, 4))


def _scalarize(out):
    w = Tensor(WEIGHTS[: out.shape[0], : out.shape[1]] if out.ndim == 2 else WEIGHTS[0, : out.shape[0]])
    return T.sum_(T.mul(out, w))


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_finite_differences(name, rng):
    op = UNARY[name]
    x = rng.uniform(-2, 2, size=(3, 4))
    f = lambda v: _scalarize(op(Tensor(v))).item()
    assert rel_err(tape_grad(lambda p: _scalarize(op(p)), x), numeric_grad(f, x)) <= 1e-4


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_ops_match_finite_differences(name, rng):
    op = BINARY[name]
    a = rng.uniform(-2, 2, size=(3, 4))
    b = rng.uniform(-2, 2, size=(3, 4))
    pa, pb = Parameter(a), Parameter(b)
    with Tape() as tape:
        loss = _scalarize(op(pa, pb))
    grads = tape.backward(loss)
    fa = numeric_grad(lambda v: _scalarize(op(Tensor(v), Tensor(b))).item(), a)
    fb = numeric_grad(lambda v: _scalarize(op(Tensor(a), Tensor(v))).item(), b)
    assert rel_err(grads[pa], fa) <= 1e-4
    assert rel_err(grads[pb], fb) <= 1e-4


def test_unbroadcast_sums_expanded_axes():
    g = np.ones((3, 4))
    assert np.array_equal(T.unbroadcast(g, (1, 4)), np.full((1, 4), 3.0))
    assert np.array_equal(T.unbroadcast(g, (4,)), np.full(4, 3.0))
    assert T.unbroadcast(g, ()) == 12.0


def test_gradient_accumulates_over_reuse():
    g = tape_grad(lambda x: T.sum_(T.add(T.mul(x, x), T.mul(Tensor(3.0), x))), np.array([1.0, -2.0]))
    np.testing.assert_allclose(g, [5.0, -1.0])


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    p = T.rowwise_softmax(Tensor(x)).numpy()
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=finite),
       st.floats(-100, 100, allow_nan=False))
def test_softmax_shift_invariant(x, c):
    p = T.rowwise_softmax(Tensor(x)).numpy()
    q = T.rowwise_softmax(Tensor(x + c)).numpy()
    np.testing.assert_allclose(p, q, atol=1e-12)
