import itertools

import numpy as np
import pytest

from nona.baselines import (KNN_GRID, InsufficientNeighborsError, KnnConfig, SingularSystemError, knn_fit_predict,
                            knn_grid_search, linear_regression_fit, linear_regression_predict)


def test_k1_is_nearest_label():
    Z = np.array([[0.0], [1.0], [5.0]])
    assert knn_fit_predict(KnnConfig(1), Z, [10.0, 20.0, 30.0], [[0.8]])[0] == 20.0


def test_k_equals_n_uniform_is_mean(rng):
    Z, y = rng.normal(size=(6, 2)), rng.normal(size=6)
    out = knn_fit_predict(KnnConfig(6, 2, "uniform"), Z, y, rng.normal(size=(3, 2)))
    np.testing.assert_allclose(out, y.mean())


def test_line_example():
    Z = np.array([[0.0], [1.0], [2.0], [10.0]])
    assert knn_fit_predict(KnnConfig(3), Z, [0.0, 1.0, 2.0, 10.0], [[0.4]])[0] == pytest.approx(1.0)


def test_distance_weighting_and_exact_hit():
    Z = np.array([[0.0], [1.0], [3.0]])
    y = np.array([0.0, 1.0, 3.0])
    w = np.array([1 / 0.5, 1 / 0.5, 1 / 2.5])
    assert knn_fit_predict(KnnConfig(3, 1, "distance"), Z, y, [[0.5]])[0] == pytest.approx((w * y).sum() / w.sum())
    assert knn_fit_predict(KnnConfig(3, 2, "distance"), Z, y, [[1.0]])[0] == 1.0


def test_too_few_neighbors():
    with pytest.raises(InsufficientNeighborsError):
        knn_fit_predict(KnnConfig(3), np.ones((2, 1)), [1.0, 2.0], [[0.0]])


def test_grid_is_twelve_configs():
    assert len(KNN_GRID) == 12
    assert KNN_GRID[0] == KnnConfig(3, 1, "uniform")


def test_grid_identical_splits_reach_zero(rng):
    Z, y = rng.normal(size=(20, 2)), rng.normal(size=20)
    cfg, mse = knn_grid_search(Z, y, Z, y)
    assert mse == 0.0 and cfg.weighting == "distance"


def test_grid_constant_labels_tie_break(rng):
    cfg, mse = knn_grid_search(rng.normal(size=(20, 2)), np.ones(20), rng.normal(size=(5, 2)), np.ones(5))
    assert (cfg, mse) == (KnnConfig(3, 1, "uniform"), 0.0)


def test_grid_matches_exhaustive_enumeration(rng):
    Z, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    Ztr, ytr, Zva, yva = Z[:35], y[:35], Z[35:], y[35:]
    scores = {}
    for k, p, w in itertools.product((3, 5, 7), (1, 2), ("uniform", "distance")):
        d = np.abs(Zva[:, None] - Ztr[None]).sum(-1) if p == 1 else np.sqrt(((Zva[:, None] - Ztr[None]) ** 2).sum(-1))
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        dk = np.take_along_axis(d, idx, 1)
        wts = np.ones_like(dk) if w == "uniform" else 1 / dk
        pred = (wts * ytr[idx]).sum(1) / wts.sum(1)
        scores[KnnConfig(k, p, w)] = np.mean((pred - yva) ** 2)
    best = min(scores, key=scores.get)
    cfg, mse = knn_grid_search(Ztr, ytr, Zva, yva)
    assert cfg == best
    assert mse == pytest.approx(scores[best], rel=1e-12)


def test_linear_regression_examples(rng):
    X = rng.normal(size=(30, 2))
    w, b = linear_regression_fit(X, 3 * X[:, 0])
    np.testing.assert_allclose(w, [3, 0], atol=1e-6)
    assert abs(b) < 1e-6
    w, b = linear_regression_fit(X, np.full(30, 4.0))
    np.testing.assert_allclose(w, 0, atol=1e-6)
    assert b == pytest.approx(4.0)


def test_linear_regression_residual_orthogonal(rng):
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    w, b = linear_regression_fit(X, y)
    r = y - linear_regression_predict(w, b, X)
    A = np.hstack([X, np.ones((40, 1))])
    assert np.abs(A.T @ r).max() <= 1e-8


def test_linear_regression_singular():
    X = np.ones((10, 2)) * 1e9
    with pytest.raises(SingularSystemError):
        linear_regression_fit(X, np.arange(10.0))
