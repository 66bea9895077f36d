"""Checkpoints: a JSON manifest plus one raw little-endian float64 blob per tensor."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import FORMAT_VERSION, ExperimentConfig
from .model import Regressor, build_model

MANIFEST = "manifest.json"


class CheckpointError(ValueError):
    pass


def _blob_name(name: str) -> str:
    return name.replace("/", "_") + ".f64"


def _write_tensor(root: Path, name: str, arr) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fname = _blob_name(name)
    (root / fname).write_bytes(arr.tobytes())
    return {"name": name, "shape": list(arr.shape), "file": fname}


def _read_tensor(root: Path, entry: dict) -> np.ndarray:
    raw = (root / entry["file"]).read_bytes()
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    shape = tuple(entry["shape"])
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(f"tensor {entry['name']}: blob size does not match shape {shape}")
    return arr.reshape(shape)


def save_checkpoint(path, model: Regressor, config: ExperimentConfig, meta: dict | None = None) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    tensors = [_write_tensor(root, name, p.data) for name, p in sorted(model.parameters().items())]
    bank = None
    if model.head_kind == "nona" and model.head.fitted:
        bank = [_write_tensor(root, "bank.z", model.head.bank_z),
                _write_tensor(root, "bank.y", model.head.bank_y)]
    manifest = {
        "format_version": FORMAT_VERSION,
        "head": model.head_kind,
        "input_dim": model.mlp.input_dim,
        "config": config.to_dict(),
        "meta": meta or {},
        "tensors": tensors,
        "bank": bank,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_checkpoint(path):
    """Return ``(model, config, manifest)``."""
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no {MANIFEST} in {root}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    config = ExperimentConfig.from_dict(manifest["config"])
    model = build_model(config, manifest["input_dim"], np.random.default_rng(0))
    params = model.parameters()
    for entry in manifest["tensors"]:
        if entry["name"] not in params:
            raise CheckpointError(f"checkpoint tensor {entry['name']} has no matching parameter")
        params[entry["name"]].assign(_read_tensor(root, entry))
    missing = set(params) - {e["name"] for e in manifest["tensors"]}
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")
    if manifest.get("bank"):
        z_entry, y_entry = manifest["bank"]
        model.head.set_neighbor_bank(_read_tensor(root, z_entry), _read_tensor(root, y_entry))
    return model, config, manifest
