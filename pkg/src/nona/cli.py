"""Command-line entry point: ``nona <subcommand>``.

Exit codes: 0 success, 1 a validation check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import knn_fit_predict, knn_grid_search
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import FORMAT_VERSION, ConfigError, ExperimentConfig, TrainConfig, load_config, resolve_seed
from .data import SyntheticSpec, generate
from .softstep import SoftStepConfig
from .training import ABLATION_ORDER, SplitData, fmt_float, run_ablation, run_benchmark, train_model

log = logging.getLogger("nona")


class UsageError(Exception):
    pass


def _header_lines(config: ExperimentConfig | None) -> list[str]:
    lines = [f"# format_version={FORMAT_VERSION}"]
    if config is not None:
        lines.append(f"# config={config.to_json()}")
    return lines


def write_result_csv(path, header, rows, config=None, notes=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in _header_lines(config) + [f"# {n}" for n in notes]:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_result_csv(path):
    """Parse a CSV written by :func:`write_result_csv`, skipping ``#`` lines."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    seed = resolve_seed(config.seed, getattr(args, "seed", None))
    return replace(config, seed=seed)


def cmd_train(args) -> int:
    config = _load(args)
    if args.with_knn:
        config = replace(config, with_knn=True)
    out = Path(args.out) if args.out else Path(config.output_dir) / (
        f"{config.dataset.target.value}-{config.model.head}-seed{config.seed}")
    out.mkdir(parents=True, exist_ok=True)
    X, y = generate(config.dataset)
    data = SplitData.from_arrays(X, y, config.seed)
    result, model = train_model(config, data)

    save_checkpoint(out / "checkpoint", model, config,
                    {"best_epoch": result.best_epoch, "epochs_run": result.epochs_run})
    rows = [[e, fmt_float(t), fmt_float(v)] for e, (t, v) in enumerate(zip(result.train_mse, result.val_mse))]
    write_result_csv(out / "trace.csv", ["epoch", "train_mse", "val_mse"], rows, config)
    write_embeddings(out / "embeddings.csv", model, data, config)
    metrics = {"format_version": FORMAT_VERSION, "config": config.to_dict(), **result.metrics()}
    _write_json(out / "metrics.json", metrics)
    # wall-clock time lives apart from metrics.json, which must be reproducible byte for byte
    _write_json(out / "timing.json", {"seconds": result.seconds})
    print(f"test_mse={fmt_float(result.test_mse)} best_epoch={result.best_epoch} run_dir={out}")
    return 0


def write_embeddings(path, model, data: SplitData, config) -> None:
    """Final embeddings as ``split,y,z1..zd`` rows, the input format of ``nona knn``."""
    rows = []
    for name, X, y in (("train", data.X_train, data.y_train), ("val", data.X_val, data.y_val),
                       ("test", data.X_test, data.y_test)):
        for yi, zi in zip(y, model.embed(X)):
            rows.append([name, fmt_float(yi)] + [fmt_float(v) for v in zi])
    d = model.mlp.embedding_dim
    write_result_csv(path, ["split", "y"] + [f"z{i + 1}" for i in range(d)], rows, config)


def surface_grid(resolution: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, resolution)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=1)


def cmd_surface(args) -> int:
    model, config, _ = load_checkpoint(args.checkpoint)
    if model.mlp.input_dim != 2:
        raise UsageError("surface export needs a model with 2-D inputs")
    if args.resolution < 2:
        raise UsageError("--resolution must be at least 2")
    G = surface_grid(args.resolution)
    if args.head == "knn":
        X, y = generate(config.dataset)
        data = SplitData.from_arrays(X, y, config.seed)
        Ztr = model.embed(data.X_train)
        best, _ = knn_grid_search(Ztr, data.y_train, model.embed(data.X_val), data.y_val)
        pred = knn_fit_predict(best, Ztr, data.y_train, model.embed(G))
    else:
        pred = model.predict(G)
    rows = [[fmt_float(a), fmt_float(b), fmt_float(c)] for (a, b), c in zip(G, pred)]
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"surface_{args.head}.csv"
    write_result_csv(out, ["x1", "x2", "y_hat"], rows, config)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_benchmark(args) -> int:
    config = _load(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be positive")
    header, row, _ = run_benchmark(config, args.repeats)
    out = Path(args.out) if args.out else Path(config.output_dir) / "results" / (
        f"benchmark_{config.dataset.target.value}.csv")
    write_result_csv(out, header, [row], config, [f"repeats={args.repeats}"])
    print(",".join(header))
    print(",".join(row))
    return 0


def cmd_ablate(args) -> int:
    config = _load(args)
    axes = tuple(a.strip() for a in args.axes.split(",") if a.strip())
    bad = [a for a in axes if a not in ABLATION_ORDER]
    if bad:
        raise UsageError(f"unknown ablation axes {bad}; choose from {list(ABLATION_ORDER)}")
    out = Path(args.out) if args.out else Path(config.output_dir) / "results"
    for axis, header, cells, winner in run_ablation(config, axes, args.seeds):
        path = out / f"ablation_{axis}.csv"
        write_result_csv(path, header, [cells], config,
                         [f"seeds={args.seeds}", f"winner={winner} (lowest mean validation MSE)"])
        print(f"{axis}: winner {winner} -> {path}")
    return 0


def _audit_model(args):
    if args.checkpoint:
        model, config, _ = load_checkpoint(args.checkpoint)
    else:
        # a short run on a small radial set so the audit has learned attention to inspect
        config = ExperimentConfig(dataset=SyntheticSpec("radial", 500, 0.05, args.seed), seed=args.seed,
                                  softstep=SoftStepConfig("s2", "pointwise"),
                                  train=TrainConfig(batch_size=128, learning_rate=1e-2, max_epochs=60))
        X, y = generate(config.dataset)
        data = SplitData.from_arrays(X, y, config.seed)
        _, model = train_model(config, data)
        return model, data
    X, y = generate(config.dataset)
    return model, SplitData.from_arrays(X, y, config.seed)


def cmd_theory_check(args) -> int:
    from .theory import empirical_triplet_audit, run_suite

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_suite(seed=args.seed)
    model, data = _audit_model(args)
    audit = empirical_triplet_audit(model, data.X_train, data.y_train, args.mass_threshold,
                                    path=out / "triplet_audit.csv")
    summary = {
        "format_version": FORMAT_VERSION,
        "checks": {k: {"passed": bool(ok), "detail": d} for k, (ok, d) in results.items()},
        "audit": {k: v for k, v in audit.items() if k != "deviations"},
    }
    _write_json(out / "theory_summary.json", summary)
    for name, (ok, detail) in results.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    print(f"audit: {audit['n_qualifying']} qualifying anchors, {audit['n_excluded']} excluded, "
          f"median |deviation| {audit['median_abs_deviation']:.4g}")
    return 0 if all(ok for ok, _ in results.values()) else 1


def cmd_knn(args) -> int:
    """Grid-searched k-NN on an embeddings CSV with columns ``split,y,z1..zd``."""
    with open(args.embeddings, newline="") as fh:
        rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#"))]
    header, body = rows[0], rows[1:]
    if header[:2] != ["split", "y"] or len(header) < 3:
        raise UsageError("embeddings CSV must start with columns split,y followed by embedding columns")
    parts = {}
    for r in body:
        parts.setdefault(r[0], []).append([float(v) for v in r[1:]])
    if "train" not in parts or "val" not in parts:
        raise UsageError("embeddings CSV needs rows for both 'train' and 'val' splits")
    arr = {k: np.asarray(v) for k, v in parts.items()}
    best, val_mse = knn_grid_search(arr["train"][:, 1:], arr["train"][:, 0], arr["val"][:, 1:], arr["val"][:, 0])
    report = {"format_version": FORMAT_VERSION, "k": best.k, "p": best.p,
              "weighting": best.weighting, "val_mse": val_mse}
    if "test" in arr:
        pred = knn_fit_predict(best, arr["train"][:, 1:], arr["train"][:, 0], arr["test"][:, 1:])
        report["test_mse"] = float(np.mean((pred - arr["test"][:, 0]) ** 2))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nona", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model from a JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--with-knn", action="store_true", help="also grid-search k-NN on the final embeddings")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("surface", help="export predictions over a grid on [-1, 1]^2")
    p.add_argument("checkpoint")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--head", choices=("model", "knn"), default="model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("ablate", help="serialized ablation over one or more axes")
    p.add_argument("config")
    p.add_argument("--axes", default=",".join(ABLATION_ORDER))
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("benchmark", help="dense / dense+kNN / NONA / NONA+kNN over repeats")
    p.add_argument("config")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("theory-check", help="closed-form optima versus brute-force oracles")
    p.add_argument("--out", default="theory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="trained NONA checkpoint to audit (default: a short radial run)")
    p.add_argument("--mass-threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_theory_check)

    p = sub.add_parser("knn", help="k-NN grid search on an embeddings CSV")
    p.add_argument("embeddings")
    p.add_argument("--out")
    p.set_defaults(func=cmd_knn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
