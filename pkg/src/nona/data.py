"""Synthetic 2-D regression targets on [-1, 1]^2 and split management.

Randomness comes from numpy's PCG64 bit generator seeded with the dataset
seed, so a given seed yields the same stream on every platform.

Target functions (noise-free values lie in [-1, 1]):

=============  ======================================
linear         (x1 + x2 + 2) / 4     (values in [0, 1])
radial         sin(2 pi r),          r = |x|
spiral         sin(4 theta + 6 r),   theta = atan2(x2, x1)
checkerboard   sin(3 pi x1) sin(3 pi x2)
=============  ======================================
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .tensor import ContractError


class Target(str, Enum):
    LINEAR = "linear"
    RADIAL = "radial"
    SPIRAL = "spiral"
    CHECKERBOARD = "checkerboard"


def target_values(target, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    x1, x2 = X[:, 0], X[:, 1]
    target = Target(target)
    if target is Target.LINEAR:
        return (x1 + x2 + 2.0) / 4.0
    r = np.hypot(x1, x2)
    if target is Target.RADIAL:
        return np.sin(2 * np.pi * r)
    if target is Target.SPIRAL:
        return np.sin(4 * np.arctan2(x2, x1) + 6 * r)
    return np.sin(3 * np.pi * x1) * np.sin(3 * np.pi * x2)


@dataclass(frozen=True)
class SyntheticSpec:
    target: Target = Target.RADIAL
    n_points: int = 2000
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target", Target(self.target))
        if self.n_points < 1:
            raise ValueError("n_points must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def generate(spec: SyntheticSpec):
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    X = rng.uniform(-1.0, 1.0, size=(spec.n_points, 2))
    y = target_values(spec.target, X)
    if spec.noise_std > 0:
        y = y + rng.normal(0.0, spec.noise_std, size=spec.n_points)
    return X, y


@dataclass(frozen=True)
class SplitPlan:
    dev_fraction: float = 0.8
    train_within_dev: float = 0.85
    seed: int = 0


def split_sizes(n: int, plan: SplitPlan = SplitPlan()):
    """Floor the development and training counts; the remainders go to test and validation."""
    n_dev = math.floor(n * plan.dev_fraction + 1e-9)
    n_train = math.floor(n_dev * plan.train_within_dev + 1e-9)
    return n_train, n_dev - n_train, n - n_dev


def split(n: int, plan: SplitPlan = SplitPlan()):
    """Seeded shuffle then contiguous (train, val, test) index blocks."""
    if n < 10:
        raise ContractError(f"need at least 10 points to split, got {n}")
    n_train, n_val, _ = split_sizes(n, plan)
    perm = np.random.Generator(np.random.PCG64(plan.seed)).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def write_csv(path, X, y) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "y"])
        for (a, b), c in zip(np.asarray(X), np.asarray(y)):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}"])


def read_csv(path):
    rows = list(csv.DictReader(Path(path).read_text().splitlines()))
    X = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    return X, y
