import json

import numpy as np
import pytest

from nona.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from nona.cli import main, read_result_csv, surface_grid
from nona.config import ConfigError, ExperimentConfig, ModelConfig, load_config, resolve_seed
from nona.data import SyntheticSpec, generate
from nona.model import build_model
from nona.softstep import SoftStepConfig


@pytest.fixture
def config_file(tmp_path):
    def make(**extra):
        cfg = {"dataset": {"target": "radial", "n_points": 120},
               "model": {"hidden_dim": 16, "embedding_dim": 4, "depth": 1},
               "train": {"max_epochs": 3, "batch_size": 32}, "seed": 2}
        cfg.update(extra)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return str(path)
    return make


def test_config_round_trip():
    cfg = ExperimentConfig(dataset=SyntheticSpec("spiral", 50), seed=4)
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg


def test_config_errors(tmp_path):
    (tmp_path / "a.json").write_text('{"dataset": {"n_points": 5}}')
    with pytest.raises(ConfigError, match="dataset.target"):
        load_config(tmp_path / "a.json")
    (tmp_path / "b.json").write_text('{"dataset": {"target": "radial"},\n "modle": {}}')
    with pytest.raises(ConfigError, match="modle"):
        load_config(tmp_path / "b.json")
    (tmp_path / "c.json").write_text('{"dataset": {\n  "target": "radial",}}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(tmp_path / "c.json")


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv("NONA_SEED", raising=False)
    assert resolve_seed(1) == 1
    monkeypatch.setenv("NONA_SEED", "7")
    assert resolve_seed(1) == 7
    assert resolve_seed(1, 9) == 9


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    cfg = ExperimentConfig(dataset=SyntheticSpec("radial", 50), softstep=SoftStepConfig("s1", "pointwise"))
    model = build_model(cfg, 2, rng)
    model.refresh_bank(rng.normal(size=(10, 2)), rng.normal(size=10))
    save_checkpoint(tmp_path / "ck", model, cfg, {"best_epoch": 3})
    loaded, cfg2, manifest = load_checkpoint(tmp_path / "ck")
    assert cfg2 == cfg and manifest["meta"] == {"best_epoch": 3}
    for name, p in model.parameters().items():
        assert loaded.parameters()[name].data.tobytes() == p.data.tobytes()
    assert loaded.head.bank_z.tobytes() == model.head.bank_z.tobytes()
    X = rng.normal(size=(4, 2))
    assert loaded.predict(X).tobytes() == model.predict(X).tobytes()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_train_artifacts_and_determinism(tmp_path, config_file, monkeypatch):
    monkeypatch.delenv("NONA_SEED", raising=False)
    path = config_file()
    assert main(["train", path, "--out", str(tmp_path / "r1")]) == 0
    assert main(["train", path, "--out", str(tmp_path / "r2")]) == 0
    for name in ("metrics.json", "trace.csv", "embeddings.csv", "timing.json", "checkpoint/manifest.json"):
        assert (tmp_path / "r1" / name).exists()
    assert (tmp_path / "r1/metrics.json").read_bytes() == (tmp_path / "r2/metrics.json").read_bytes()
    metrics = json.loads((tmp_path / "r1/metrics.json").read_text())
    assert metrics["format_version"] == 1 and metrics["config"]["seed"] == 2
    text = (tmp_path / "r1/trace.csv").read_text()
    assert text.startswith("# format_version=1\n# config=")


def test_seed_flag_and_env(tmp_path, config_file, monkeypatch):
    path = config_file()
    monkeypatch.setenv("NONA_SEED", "11")
    main(["train", path, "--out", str(tmp_path / "env")])
    main(["train", path, "--seed", "12", "--out", str(tmp_path / "flag")])
    assert json.loads((tmp_path / "env/metrics.json").read_text())["config"]["seed"] == 11
    assert json.loads((tmp_path / "flag/metrics.json").read_text())["config"]["seed"] == 12


def test_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"dataset": {}}')
    assert main(["train", str(tmp_path / "bad.json")]) == 2
    assert "dataset.target" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_surface_grid_contract():
    G = surface_grid(3)
    assert G.shape == (9, 2)
    assert {tuple(r) for r in G} >= {(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)}


def test_surface_export(tmp_path, config_file):
    main(["train", config_file(), "--out", str(tmp_path / "r")])
    ck = str(tmp_path / "r/checkpoint")
    assert main(["surface", ck, "--resolution", "4", "--out", str(tmp_path / "s.csv")]) == 0
    header, rows = read_result_csv(tmp_path / "s.csv")
    assert header == ["x1", "x2", "y_hat"] and len(rows) == 16
    _, y = generate(SyntheticSpec("radial", 120))
    yhat = np.array([float(r[2]) for r in rows])
    # NONA predictions are convex combinations of training labels
    assert yhat.min() >= y.min() - 1e-12 and yhat.max() <= y.max() + 1e-12
    assert main(["surface", ck, "--resolution", "3", "--head", "knn", "--out", str(tmp_path / "k.csv")]) == 0
    assert len(read_result_csv(tmp_path / "k.csv")[1]) == 9


def test_surface_constant_model(tmp_path, rng):
    cfg = ExperimentConfig(dataset=SyntheticSpec("radial", 50), model=ModelConfig(head="dense"))
    model = build_model(cfg, 2, rng)
    for name, p in model.parameters().items():
        p.assign(np.zeros(p.shape) if name != "dense.bias" else [0.25])
    save_checkpoint(tmp_path / "ck", model, cfg)
    main(["surface", str(tmp_path / "ck"), "--resolution", "5", "--out", str(tmp_path / "s.csv")])
    _, rows = read_result_csv(tmp_path / "s.csv")
    assert {r[2] for r in rows} == {"0.25"}


def test_surface_rejects_non_2d(tmp_path, rng):
    cfg = ExperimentConfig(dataset=SyntheticSpec("radial", 50))
    save_checkpoint(tmp_path / "ck", build_model(cfg, 3, rng), cfg)
    assert main(["surface", str(tmp_path / "ck")]) == 2


def test_benchmark_single_repeat(tmp_path, config_file):
    assert main(["benchmark", config_file(), "--repeats", "1", "--out", str(tmp_path / "b.csv")]) == 0
    header, rows = read_result_csv(tmp_path / "b.csv")
    assert header == ["dataset", "dense", "dense_knn", "nona", "nona_knn"]
    assert len(rows) == 1 and all(c.endswith("±0") for c in rows[0][1:])


def test_ablate_similarity_axis(tmp_path, config_file):
    assert main(["ablate", config_file(), "--axes", "similarity", "--seeds", "1", "--out", str(tmp_path)]) == 0
    files = list(tmp_path.glob("ablation_*.csv"))
    assert [f.name for f in files] == ["ablation_similarity.csv"]
    header, rows = read_result_csv(files[0])
    assert header == ["neg_l1", "neg_l2", "dot", "cosine"] and len(rows) == 1
    assert main(["ablate", config_file(), "--axes", "depth"]) == 2


def test_knn_subcommand(tmp_path, config_file, capsys):
    main(["train", config_file(), "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["knn", str(tmp_path / "r/embeddings.csv"), "--out", str(tmp_path / "k.json")]) == 0
    report = json.loads((tmp_path / "k.json").read_text())
    assert {"k", "p", "weighting", "val_mse", "test_mse"} <= set(report)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    assert main(["knn", str(tmp_path / "bad.csv")]) == 2


@pytest.mark.slow
def test_theory_check_exit_code(tmp_path):
    assert main(["theory-check", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "triplet_audit.csv").exists()
    summary = json.loads((tmp_path / "theory_summary.json").read_text())
    assert all(v["passed"] for v in summary["checks"].values())
