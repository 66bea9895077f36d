"""Optimisation, early stopping, evaluation and the experiment runners."""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import knn_grid_search, knn_fit_predict
from .config import ExperimentConfig, TrainConfig
from .data import SplitPlan, generate, split
from .model import Regressor, build_model
from .softstep import SoftStepConfig
from .tensor import ContractError, Tape, Tensor, _as_tensor, mean, mul, sub

log = logging.getLogger(__name__)

IMPROVEMENT_TOL = 1e-9


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


def mse_loss(pred, y) -> Tensor:
    pred = _as_tensor(pred)
    y = _as_tensor(y)
    if pred.size == 0:
        raise ContractError("mse_loss of an empty batch")
    if pred.shape != y.shape:
        raise ContractError(f"prediction shape {pred.shape} != label shape {y.shape}")
    r = sub(pred, y)
    return mean(mul(r, r))


class Adam:
    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.assign(p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps))

    def state(self):
        return copy.deepcopy((self.m, self.v, self.t))


class SGD:
    def __init__(self, params: dict, lr=1e-2):
        self.params = params
        self.lr = lr

    def step(self, grads: dict) -> None:
        for p in self.params.values():
            g = grads.get(p)
            if g is not None:
                p.assign(p.data - self.lr * g)


def make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    return SGD(params, cfg.learning_rate)


def make_batches(order: np.ndarray, batch_size: int) -> list:
    """Contiguous chunks of ``order``; a trailing singleton joins the previous chunk."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


@dataclass
class SplitData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray

    @classmethod
    def from_arrays(cls, X, y, seed: int, plan: SplitPlan | None = None) -> "SplitData":
        plan = plan or SplitPlan(seed=seed)
        tr, va, te = split(len(X), replace(plan, seed=seed))
        return cls(X[tr], y[tr], X[va], y[va], X[te], y[te])


@dataclass
class RunResult:
    train_mse: list
    val_mse: list
    test_mse: float
    best_epoch: int
    epochs_run: int
    config: dict
    seconds: float = 0.0
    knn: dict | None = None
    extra: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        """Deterministic summary (no timing) for ``metrics.json``."""
        out = {
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "test_mse": self.test_mse,
            "best_val_mse": self.val_mse[self.best_epoch] if self.val_mse else None,
            "final_train_mse": self.train_mse[-1] if self.train_mse else None,
        }
        if self.knn is not None:
            out["knn"] = self.knn
        return out


def evaluate(model: Regressor, X, y) -> float:
    """Full-split MSE; NONA models predict against their frozen bank."""
    pred = model.predict(X)
    return float(np.mean((pred - np.asarray(y)) ** 2))


def _rngs(seed: int):
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(init_ss)), np.random.Generator(np.random.PCG64(batch_ss))


def train_model(config: ExperimentConfig, data: SplitData, head_kind: str | None = None):
    """Train one model with early stopping on validation MSE.

    Returns ``(RunResult, model)``.  The model carries the parameters from
    the best validation epoch and, for NONA, a neighbor bank built from the
    training split under those parameters.  Test MSE is computed once.
    """
    if head_kind is not None and head_kind != config.model.head:
        config = replace(config, model=replace(config.model, head=head_kind))
    cfg = config.train
    init_rng, batch_rng = _rngs(config.seed)
    model = build_model(config, data.X_train.shape[1], init_rng)
    params = model.parameters()
    opt = make_optimizer(params, cfg)
    if model.head_kind == "nona" and len(data.X_train) < 2:
        raise ContractError("NONA needs at least two training points")

    start = time.perf_counter()
    train_trace, val_trace = [], []
    best_val, best_epoch = np.inf, -1
    snapshot = None
    n = len(data.X_train)
    for epoch in range(cfg.max_epochs):
        total = 0.0
        for idx in make_batches(batch_rng.permutation(n), cfg.batch_size):
            xb, yb = data.X_train[idx], data.y_train[idx]
            with Tape() as tape:
                loss = mse_loss(model.forward_train(xb, yb), yb)
            lv = loss.item()
            if not np.isfinite(lv):
                raise DivergenceError(epoch)
            opt.step(tape.backward(loss))
            total += lv * len(idx)
        train_trace.append(total / n)

        model.refresh_bank(data.X_train, data.y_train)
        val = evaluate(model, data.X_val, data.y_val)
        if not np.isfinite(val):
            raise DivergenceError(epoch)
        val_trace.append(val)
        if val < best_val - IMPROVEMENT_TOL:
            best_val, best_epoch = val, epoch
            snapshot = {k: p.data for k, p in params.items()}
        elif epoch - best_epoch >= cfg.patience:
            break
        log.debug("epoch %d train %.6g val %.6g", epoch, train_trace[-1], val)

    for k, p in params.items():
        p.assign(snapshot[k])
    model.refresh_bank(data.X_train, data.y_train)
    test = evaluate(model, data.X_test, data.y_test)

    knn = None
    if config.with_knn:
        knn = knn_on_embeddings(model, data)
    result = RunResult(train_trace, val_trace, test, best_epoch, len(train_trace),
                       config.to_dict(), time.perf_counter() - start, knn)
    return result, model


def knn_on_embeddings(model: Regressor, data: SplitData) -> dict:
    """Two-stage baseline: grid-searched k-NN on the model's final embeddings."""
    Ztr, Zva, Zte = (model.embed(X) for X in (data.X_train, data.X_val, data.X_test))
    best, val_mse = knn_grid_search(Ztr, data.y_train, Zva, data.y_val)
    pred = knn_fit_predict(best, Ztr, data.y_train, Zte)
    return {"k": best.k, "p": best.p, "weighting": best.weighting,
            "val_mse": val_mse, "test_mse": float(np.mean((pred - data.y_test) ** 2))}


def fmt_float(x: float) -> str:
    return f"{x:.17g}"


def mean_std_cell(values) -> str:
    values = np.asarray(values, dtype=np.float64)
    return f"{fmt_float(values.mean())}±{fmt_float(values.std())}"


def run_benchmark(config: ExperimentConfig, n_repeats: int = 10):
    """Dense, Dense+kNN, NONA and NONA+kNN test MSE over reseeded repeats.

    Repeat ``r`` uses run seed ``config.seed + r`` for split, initialisation
    and batching; the dataset itself is fixed by ``config.dataset.seed``.
    Returns ``(header, row, raw)`` where ``raw`` maps column to the per-repeat values.
    """
    X, y = generate(config.dataset)
    raw = {"dense": [], "dense_knn": [], "nona": [], "nona_knn": []}
    for r in range(n_repeats):
        seed = config.seed + r
        data = SplitData.from_arrays(X, y, seed)
        for head in ("dense", "nona"):
            cfg = replace(config, seed=seed, with_knn=True, model=replace(config.model, head=head))
            result, _ = train_model(cfg, data)
            raw[head].append(result.test_mse)
            raw[head + "_knn"].append(result.knn["test_mse"])
            log.info("repeat %d %s test %.6g knn %.6g", r, head, result.test_mse, result.knn["test_mse"])
    header = ["dataset", "dense", "dense_knn", "nona", "nona_knn"]
    row = [config.dataset.target.value] + [mean_std_cell(raw[c]) for c in header[1:]]
    return header, row, raw


ABLATION_ORDER = ("similarity", "softstep", "batch_size", "embedding_dim")

ABLATION_VARIANTS = {
    "similarity": ("neg_l1", "neg_l2", "dot", "cosine"),
    "softstep": ("s1_global", "s1_pointwise", "s2_global", "s2_pointwise"),
    "batch_size": (32, 64, 128, 256),
    "embedding_dim": (25, 50, 100),
}


def ablation_defaults(config: ExperimentConfig) -> ExperimentConfig:
    """Settings held fixed until their axis is ablated."""
    return replace(
        config,
        model=replace(config.model, head="nona", embedding_dim=50),
        softstep=SoftStepConfig("none", "global", config.softstep.epsilon, config.softstep.t_clamp),
        train=replace(config.train, batch_size=128),
    )


def _apply_variant(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "similarity":
        return replace(config, similarity=value)
    if axis == "softstep":
        family, mode = value.split("_")
        return replace(config, softstep=SoftStepConfig(family, mode, config.softstep.epsilon,
                                                       config.softstep.t_clamp))
    if axis == "batch_size":
        return replace(config, train=replace(config.train, batch_size=value))
    return replace(config, model=replace(config.model, embedding_dim=value))


def run_ablation(config: ExperimentConfig, axes=ABLATION_ORDER, n_seeds: int = 3):
    """Serialized ablation: one axis at a time, the winner carried forward.

    Stages always run in the fixed order similarity, softstep, batch size,
    embedding dimension (restricted to ``axes``).  Each cell is the test MSE
    mean±std over ``n_seeds`` splits; the winner is the variant with the
    lowest mean validation MSE, so test data never steers the selection.
    Returns a list of ``(axis, header, row, winner)`` tuples.
    """
    unknown = set(axes) - set(ABLATION_ORDER)
    if unknown:
        raise ValueError(f"unknown ablation axes: {sorted(unknown)}")
    X, y = generate(config.dataset)
    current = ablation_defaults(config)
    stages = []
    for axis in (a for a in ABLATION_ORDER if a in axes):
        cells, val_means = [], []
        for value in ABLATION_VARIANTS[axis]:
            cfg = _apply_variant(current, axis, value)
            tests, vals = [], []
            for s in range(n_seeds):
                seed = config.seed + s
                result, _ = train_model(replace(cfg, seed=seed), SplitData.from_arrays(X, y, seed))
                tests.append(result.test_mse)
                vals.append(result.val_mse[result.best_epoch])
            cells.append(mean_std_cell(tests))
            val_means.append(float(np.mean(vals)))
        winner = ABLATION_VARIANTS[axis][int(np.argmin(val_means))]
        current = _apply_variant(current, axis, winner)
        stages.append((axis, [str(v) for v in ABLATION_VARIANTS[axis]], cells, winner))
    return stages


# (batch_size, learning_rate) candidates, the same for every head
TUNING_GRID = ((32, 1e-3), (32, 1e-2), (256, 1e-3), (256, 1e-2))


def select_train_config(config: ExperimentConfig, data: SplitData, grid=TUNING_GRID):
    """Pick ``(batch_size, learning_rate)`` from ``grid`` by best validation MSE.

    Returns ``(config, scores)`` with the winning settings applied; ties keep
    the earlier grid entry.
    """
    scores = []
    for bs, lr in grid:
        cfg = replace(config, train=replace(config.train, batch_size=bs, learning_rate=lr))
        result, _ = train_model(replace(cfg, with_knn=False), data)
        scores.append(result.val_mse[result.best_epoch])
    bs, lr = grid[int(np.argmin(scores))]
    return replace(config, train=replace(config.train, batch_size=bs, learning_rate=lr)), scores
