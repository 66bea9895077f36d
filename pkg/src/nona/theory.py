"""Executable checks of the attention-allocation optima under MSE.

With rows of ``p`` summing to one, the NONA training loss equals
``mean_i (sum_j (y_i - y_j) p_ij) ** 2``.  Holding all but a few weights of
row ``i`` fixed, the free weights share a budget ``R`` and the loss term is
a convex quadratic on the scaled simplex.  The closed-form optima below are
checked against exhaustive grid search.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .tensor import ContractError


def mse_decomposition_gap(y, p, tol: float = 1e-12) -> float:
    """``|MSE(p @ y, y) - mean_i (sum_j (y_i - y_j) p_ij)**2|``."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (len(y), len(y)):
        raise ContractError("p must be a square matrix matching y")
    if np.abs(p.sum(axis=1) - 1.0).max() > tol or (p < 0).any():
        raise ContractError("p must be row-stochastic")
    if np.any(np.diag(p) != 0):
        raise ContractError("p must have a zero diagonal")
    direct = np.mean((y - p @ y) ** 2)
    delta = y[:, None] - y[None, :]
    decomposed = np.mean((delta * p).sum(axis=1) ** 2)
    return float(abs(direct - decomposed))


@dataclass(frozen=True)
class TripletInstance:
    y_i: float
    y_j: float
    y_k: float
    R: float = 1.0

    def __post_init__(self):
        if len({self.y_i, self.y_j, self.y_k}) != 3:
            raise ContractError("triplet labels must be pairwise distinct")
        if not 0 < self.R <= 1:
            raise ContractError("budget R must lie in (0, 1]")

    @property
    def d_ij(self):
        return self.y_i - self.y_j

    @property
    def d_ik(self):
        return self.y_i - self.y_k

    def objective(self, p_ij: float, p_ik: float) -> float:
        return (self.d_ij * p_ij + self.d_ik * p_ik) ** 2


def triplet_optimum_closed_form(inst: TripletInstance):
    """Minimiser of ``(d_ij p_ij + d_ik p_ik)**2`` with ``p_ij + p_ik = R``.

    The unconstrained root ``p_ij = d_ik R / (d_ik - d_ij)`` lies inside
    ``[0, R]`` exactly when ``y_i`` sits between the other two labels; then
    ``p_ij / p_ik = (y_k - y_i) / (y_i - y_j)``.  Otherwise the whole budget
    goes to the neighbor whose label is closer.
    """
    p_ij = inst.d_ik * inst.R / (inst.d_ik - inst.d_ij)
    p_ij = min(max(p_ij, 0.0), inst.R)
    return p_ij, inst.R - p_ij


def triplet_optimum_bruteforce(inst: TripletInstance, resolution: float = 1e-4):
    if resolution > 1e-3:
        raise ContractError("grid resolution must be at most 1e-3")
    p, _ = kernels.triplet_grid_argmin([inst.d_ij], [inst.d_ik], [inst.R], resolution)
    return float(p[0]), inst.R - float(p[0])


def triplet_bruteforce_batch(y_i, y_j, y_k, R, resolution: float = 1e-4):
    """Vectorised brute force over many instances; returns ``(p_ij, objective)``."""
    y_i, y_j, y_k, R = (np.asarray(v, dtype=np.float64) for v in (y_i, y_j, y_k, R))
    return kernels.triplet_grid_argmin(y_i - y_j, y_i - y_k, R, resolution)


def triplet_closed_form_batch(y_i, y_j, y_k, R):
    y_i, y_j, y_k, R = (np.asarray(v, dtype=np.float64) for v in (y_i, y_j, y_k, R))
    d_ij, d_ik = y_i - y_j, y_i - y_k
    p = np.clip(d_ik * R / (d_ik - d_ij), 0.0, R)
    return p, (d_ij * p + d_ik * (R - p)) ** 2


@dataclass(frozen=True)
class SimplexInstance:
    y_i: float
    neighbors: tuple
    R: float = 1.0

    def __post_init__(self):
        nb = tuple(float(v) for v in self.neighbors)
        object.__setattr__(self, "neighbors", nb)
        if len(nb) < 2:
            raise ContractError("need at least two neighbors")
        if any(b <= a for a, b in zip(nb, nb[1:])):
            raise ContractError("neighbor labels must be strictly increasing")
        if self.y_i in nb:
            raise ContractError("anchor label must differ from every neighbor label")
        if not 0 < self.R <= 1:
            raise ContractError("budget R must lie in (0, 1]")

    @property
    def deltas(self) -> np.ndarray:
        return self.y_i - np.asarray(self.neighbors)

    def objective(self, p) -> float:
        return float(np.dot(self.deltas, p) ** 2)


def simplex_optimum(inst: SimplexInstance) -> np.ndarray:
    """Closed-form allocation of budget ``R`` over sorted neighbor labels.

    An anchor below (above) every neighbor puts everything on the lowest
    (highest) label.  Otherwise the two labels bracketing ``y_i`` split the
    budget with weight ``lam = d_hi / (d_hi - d_lo)`` on the lower one, which
    zeroes the weighted label difference.
    """
    nb = np.asarray(inst.neighbors)
    M = len(nb)
    p = np.zeros(M)
    if inst.y_i < nb[0]:
        p[0] = inst.R
    elif inst.y_i > nb[-1]:
        p[-1] = inst.R
    else:
        m = int(np.searchsorted(nb, inst.y_i)) - 1
        d = inst.deltas
        lam = d[m + 1] / (d[m + 1] - d[m])
        p[m] = lam * inst.R
        p[m + 1] = (1.0 - lam) * inst.R
    return p


@lru_cache(maxsize=8)
def simplex_grid(M: int, steps: int) -> np.ndarray:
    """All points of the unit simplex in ``R^M`` with coordinates in ``1/steps`` increments."""
    grid = _compositions(M, steps).astype(np.float64) / steps
    grid.setflags(write=False)
    return grid


def _compositions(M, total):
    # every non-negative integer M-vector summing to ``total``
    if M == 1:
        return np.array([[total]])
    if M == 2:
        a = np.arange(total + 1)
        return np.stack([a, total - a], axis=1)
    blocks = []
    for first in range(total + 1):
        rest = _compositions(M - 1, total - first)
        blocks.append(np.hstack([np.full((len(rest), 1), first), rest]))
    return np.vstack(blocks)


def simplex_optimum_bruteforce(inst: SimplexInstance, resolution: float = 0.005):
    """Grid minimum over the scaled simplex; returns ``(p, objective)``."""
    M = len(inst.neighbors)
    if M > 4:
        raise ContractError("brute-force simplex search is limited to M <= 4")
    steps = int(round(1.0 / resolution))
    grid = simplex_grid(M, steps)
    f = (inst.R * (grid @ inst.deltas)) ** 2
    m = int(np.argmin(f))
    return inst.R * grid[m], float(f[m])


def random_triplets(rng: np.random.Generator, n: int):
    """``n`` random triplets with distinct labels in [0, 1] and budget in (0, 1]."""
    y = rng.uniform(0.0, 1.0, size=(n, 3))
    R = 1.0 - rng.uniform(0.0, 1.0, size=n)
    return y[:, 0], y[:, 1], y[:, 2], R


def random_simplex_instance(rng: np.random.Generator, M: int) -> SimplexInstance:
    nb = np.sort(rng.uniform(-1.0, 1.0, size=M))
    y_i = rng.uniform(-1.2, 1.2)
    return SimplexInstance(float(y_i), tuple(nb), float(1.0 - rng.uniform(0.0, 1.0)))


def random_row_stochastic(rng: np.random.Generator, b: int) -> np.ndarray:
    p = rng.uniform(0.0, 1.0, size=(b, b))
    np.fill_diagonal(p, 0.0)
    return p / p.sum(axis=1, keepdims=True)


def run_suite(seed: int = 0, n_triplets: int = 10_000, n_simplex: int = 1_000,
              n_decomp: int = 1_000) -> dict:
    """Run every oracle comparison; returns ``{name: (passed, detail)}``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = {}

    gaps = []
    for _ in range(n_decomp):
        b = int(rng.integers(2, 65))
        gaps.append(mse_decomposition_gap(rng.normal(size=b), random_row_stochastic(rng, b)))
    out["mse_decomposition"] = (max(gaps) <= 1e-10, f"max gap {max(gaps):.3g}")

    yi, yj, yk, R = random_triplets(rng, n_triplets)
    step = 1e-4
    p_cf, f_cf = triplet_closed_form_batch(yi, yj, yk, R)
    p_bf, f_bf = triplet_bruteforce_batch(yi, yj, yk, R, step)
    alloc_err = np.abs(p_cf - p_bf).max()
    obj_err = np.abs(f_cf - f_bf).max()
    inter = ((yj < yi) & (yi < yk)) | ((yk < yi) & (yi < yj))
    out["triplet"] = (bool(alloc_err <= step and obj_err <= 1e-8),
                      f"max |dp| {alloc_err:.3g}, max |df| {obj_err:.3g}, "
                      f"{int(inter.sum())} intermediate / {int((~inter).sum())} extreme")

    worst = -np.inf
    for n in range(n_simplex):
        inst = random_simplex_instance(rng, 3 + n % 2)
        _, f_bf = simplex_optimum_bruteforce(inst)
        worst = max(worst, inst.objective(simplex_optimum(inst)) - f_bf)
    out["simplex"] = (bool(worst <= 1e-6), f"max closed - brute {worst:.3g}")
    return out


def empirical_triplet_audit(model, X, y, mass_threshold: float = 0.5, path=None) -> dict:
    """Compare learned attention splits with the intermediate-anchor optimum.

    Every point attends to the others (self masked, as in training).  The
    neighbors of anchor ``i`` with lower labels are pooled into one
    pseudo-neighbor ``j`` carrying their total attention and their
    attention-weighted mean label gap; likewise those above into ``k``.
    This reduces each row to the triplet form, whose optimum splits the
    mass in inverse proportion to the gaps.  Anchors without neighbors on
    both sides, or whose pooled pair carries less than ``mass_threshold``
    of the attention, are excluded and counted.  The reported deviation is
    ``log(p_ij / p_ik) - log((y_k - y_i) / (y_i - y_j))``.  Diagnostic only.
    """
    from .softstep import SoftStepFamily

    head = model.head
    if model.head_kind != "nona" or head.softstep_config.family is SoftStepFamily.NONE:
        raise ContractError("the triplet audit needs a NONA head with SoftStep enabled")
    y = np.asarray(y, dtype=np.float64)
    p = head.attention(model.embed(X), training=True).numpy()
    records, excluded = [], 0
    for i in range(len(y)):
        row = p[i]
        below = (row > 0) & (y < y[i])
        above = (row > 0) & (y > y[i])
        m_lo, m_hi = row[below].sum(), row[above].sum()
        if not below.any() or not above.any() or m_lo + m_hi < mass_threshold:
            excluded += 1
            continue
        gap_lo = (row[below] * (y[i] - y[below])).sum() / m_lo
        gap_hi = (row[above] * (y[above] - y[i])).sum() / m_hi
        dev = np.log(m_lo / m_hi) - np.log(gap_hi / gap_lo)
        records.append((i, int(below.sum()), int(above.sum()), y[i], m_lo, m_hi, gap_lo, gap_hi, dev))
    devs = np.array([r[-1] for r in records])
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["anchor", "n_below", "n_above", "y_i", "p_below", "p_above",
                        "gap_below", "gap_above", "deviation"])
            for r in records:
                w.writerow(list(r[:3]) + [f"{v:.17g}" for v in r[3:]])
    return {
        "n_anchors": len(y),
        "n_qualifying": len(records),
        "n_excluded": excluded,
        "median_abs_deviation": float(np.median(np.abs(devs))) if len(devs) else float("nan"),
        "deviations": devs,
    }
