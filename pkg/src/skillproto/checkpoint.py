"""Checkpoint persistence: human-readable manifest (hyperparameters,
vocabulary, discrete prototype parts) plus a raw little-endian float32 tensor
blob."""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from .data import SkillVocabulary
from .model import SetRegressor
from .training import TrainConfig, build_model

FORMAT_VERSION = 1

# discrete prototype state lives in the manifest, not the tensor blob
_JSON_STATE = ("bank.gamma_s", "bank.gamma_lv", "bank.delta", "bank.derived")


class CheckpointError(RuntimeError):
    pass


def _tensor_names(model) -> list[str]:
    return sorted(k for k in model.state_dict() if k not in _JSON_STATE)


def _sparse_rows(matrix: torch.Tensor) -> list[dict[str, float]]:
    matrix = matrix.detach()
    rows = []
    for r in range(matrix.shape[0]):
        nz = torch.nonzero(matrix[r]).flatten().tolist()
        rows.append({str(i): float(matrix[r, i]) for i in nz})
    return rows


def _dense_rows(rows: list[dict[str, float]], shape: tuple[int, int]) -> torch.Tensor:
    out = torch.zeros(shape)
    for r, row in enumerate(rows):
        for i, v in row.items():
            out[r, int(i)] = v
    return out


def checkpoint_save(model, config: TrainConfig, path: str) -> None:
    """Write manifest.json and tensors.bin under `path` (created if needed);
    each file lands via an atomic rename."""
    try:
        os.makedirs(path, exist_ok=True)
        state = model.state_dict()
        blobs = []
        index = []
        offset = 0
        for name in _tensor_names(model):
            arr = state[name].detach().to(torch.float32).numpy()
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            index.append(
                {
                    "name": name,
                    "shape": list(arr.shape),
                    "byte_offset": offset,
                    "byte_length": len(data),
                }
            )
            blobs.append(data)
            offset += len(data)
        manifest = {
            "format_version": FORMAT_VERSION,
            "hyperparameters": config.to_json(),
            "vocabulary": model.vocab.to_json(),
            "prototypes": _prototype_state(model),
            "tensors": index,
        }
        tensors_tmp = os.path.join(path, "tensors.bin.tmp")
        with open(tensors_tmp, "wb") as fh:
            fh.write(b"".join(blobs))
        os.replace(tensors_tmp, os.path.join(path, "tensors.bin"))
        manifest_tmp = os.path.join(path, "manifest.json.tmp")
        with open(manifest_tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
        os.replace(manifest_tmp, os.path.join(path, "manifest.json"))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint at {path}: {exc}") from exc


def _prototype_state(model) -> dict | None:
    if not isinstance(model, SetRegressor):
        return None
    bank = model.bank
    mean_w = getattr(model, "mean_salary_weight", None)
    return {
        "derived": bank.is_derived,
        "gamma_s": [sorted(torch.nonzero(r).flatten().tolist()) for r in bank.gamma_s],
        "gamma_lv": _sparse_rows(bank.gamma_lv),
        "delta": _sparse_rows(bank.delta),
        "mean_salary_weight": [float(x) for x in mean_w] if mean_w is not None else None,
    }


def checkpoint_load(path: str):
    """Load a checkpoint directory; returns (model, config).

    Validates the format version, the tensor index against the blob size, and
    every tensor shape against the freshly built model.
    """
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise CheckpointError(f"checkpoint manifest not found: {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint manifest {manifest_path}: {exc}") from None

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version: {version!r} (expected {FORMAT_VERSION})"
        )
    config = TrainConfig.from_json(manifest["hyperparameters"])
    vocab = SkillVocabulary.from_json(manifest["vocabulary"])
    model = build_model(vocab, config)

    tensors_path = os.path.join(path, "tensors.bin")
    if not os.path.exists(tensors_path):
        raise CheckpointError(f"checkpoint tensor blob not found: {tensors_path}")
    blob_size = os.path.getsize(tensors_path)
    expected = sum(e["byte_length"] for e in manifest["tensors"])
    state = dict(model.state_dict())
    with open(tensors_path, "rb") as fh:
        for entry in manifest["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            end = entry["byte_offset"] + entry["byte_length"]
            if end > blob_size:
                raise CheckpointError(
                    f"tensors.bin is truncated: tensor {name!r} ends at byte {end}, "
                    f"file has {blob_size}"
                )
            if name not in state:
                raise CheckpointError(f"manifest names unknown tensor {name!r}")
            if tuple(state[name].shape) != shape:
                raise CheckpointError(
                    f"shape mismatch for tensor {name!r}: manifest {shape}, "
                    f"model {tuple(state[name].shape)}"
                )
            fh.seek(entry["byte_offset"])
            data = fh.read(entry["byte_length"])
            if len(data) != entry["byte_length"]:
                raise CheckpointError(f"short read for tensor {name!r}")
            arr = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
            state[name] = torch.from_numpy(arr).to(state[name].dtype)
    if blob_size != expected:
        raise CheckpointError(
            f"tensors.bin has {blob_size} bytes but the manifest indexes {expected}"
        )

    protos = manifest.get("prototypes")
    if isinstance(model, SetRegressor) and protos is not None:
        m, n = model.bank.gamma_s.shape
        gamma_s = torch.zeros(m, n)
        for r, ids in enumerate(protos["gamma_s"]):
            gamma_s[r, ids] = 1.0
        state["bank.gamma_s"] = gamma_s
        state["bank.gamma_lv"] = _dense_rows(protos["gamma_lv"], (m, n))
        state["bank.delta"] = _dense_rows(protos["delta"], (m, n))
        state["bank.derived"] = torch.tensor(bool(protos["derived"]))
    model.load_state_dict(state)
    if isinstance(model, SetRegressor) and protos and protos.get("mean_salary_weight"):
        model.mean_salary_weight = np.asarray(protos["mean_salary_weight"], dtype=np.float64)
    model.eval()
    return model, config
