"""Non-differentiable comparison predictors: exact k-NN and least squares."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels


class InsufficientNeighborsError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    p: int = 2
    weighting: str = "uniform"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.weighting not in ("uniform", "distance"):
            raise ValueError("weighting must be 'uniform' or 'distance'")


KNN_GRID = tuple(
    KnnConfig(k, p, w) for k, p, w in itertools.product((3, 5, 7), (1, 2), ("uniform", "distance"))
)


def _distances(Z_query, Z_train, p):
    if p == 1:
        return kernels.pairwise_l1(Z_query, Z_train)
    return kernels.pairwise_l2(Z_query, Z_train)


def knn_fit_predict(config: KnnConfig, Z_train, y_train, Z_query) -> np.ndarray:
    """Brute-force k-NN regression.

    Ties at the k-th distance go to the lower training index.  With
    distance weighting a query that coincides with training points returns
    the mean label of those exact hits.
    """
    Z_train = np.atleast_2d(np.asarray(Z_train, dtype=np.float64))
    Z_query = np.atleast_2d(np.asarray(Z_query, dtype=np.float64))
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(Z_train) < config.k:
        raise InsufficientNeighborsError(f"k={config.k} but only {len(Z_train)} training points")
    D = _distances(Z_query, Z_train, config.p)
    idx = kernels.knn_indices(D, config.k)
    labels = y_train[idx]
    if config.weighting == "uniform":
        return labels.mean(axis=1)
    dist = np.take_along_axis(D, idx, axis=1)
    hit = dist == 0
    with np.errstate(divide="ignore"):
        w = np.where(hit.any(axis=1, keepdims=True), hit.astype(float), 1.0 / dist)
    return (w * labels).sum(axis=1) / w.sum(axis=1)


def knn_grid_search(Z_train, y_train, Z_val, y_val, grid=KNN_GRID):
    """Pick the grid config with the lowest validation MSE.

    Ties resolve to smaller k, then smaller p, then uniform weighting,
    independent of the order of ``grid``.
    """
    y_val = np.asarray(y_val, dtype=np.float64)
    scored = []
    for cfg in grid:
        pred = knn_fit_predict(cfg, Z_train, y_train, Z_val)
        mse = float(np.mean((pred - y_val) ** 2))
        scored.append((mse, cfg.k, cfg.p, cfg.weighting != "uniform", cfg))
    best = min(scored, key=lambda s: s[:4])
    return best[4], best[0]


def linear_regression_fit(X, y, ridge: float = 1e-8):
    """Least squares with intercept via ridge-stabilised normal equations.

    Returns ``(weights, bias)``; the intercept is not penalised.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n <= d:
        raise ValueError(f"need more samples than features, got n={n}, d={d}")
    A = np.hstack([X, np.ones((n, 1))])
    gram = A.T @ A
    gram[:d, :d] += ridge * np.eye(d)
    if np.linalg.cond(gram) > 1e14:
        raise SingularSystemError("design matrix is rank deficient")
    coef = np.linalg.solve(gram, A.T @ y)
    return coef[:d], float(coef[d])


def linear_regression_predict(weights, bias, X) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ np.asarray(weights) + bias
