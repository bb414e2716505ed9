"""
Checkpoint directories.

    <dir>/manifest.json                  format, model spec, plan, file hashes
    <dir>/tensors/<param>.f64            parameter values, raw little-endian
    <dir>/ema/<param>.f64                EMA shadows
    <dir>/score_grads/<weight>.f64       grad[W] used for the next mask refresh
    <dir>/masks/<config>/<weight>.mask   bit-packed masks with header
    <dir>/bsr/<config>/<weight>.bsr      block-CSR export of the EMA sub-network
    <dir>/history.csv                    step records without wall time

The manifest carries no timestamps or timings and is written with sorted
keys, so a deterministic run produces byte-identical directories. Its
``hash`` is the SHA-256 over every payload's ``path:sha256`` line.

With ``export_dtype="float32"`` tensors are stored as ``.f32``; loading
widens them back to float64, so that mode is export-only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import shutil
from pathlib import Path
from typing import Any, Literal

import numpy as np

from dsnn.errors import EXIT_USAGE, CheckpointError
from dsnn.models.toy import build_model
from dsnn.pruning.masks import BinaryMask
from dsnn.pruning.plan import SparsityPlan
from dsnn.sparse.bsr import BlockCsrMatrix, from_masked_dense
from dsnn.training.metrics import StepRecord
from dsnn.training.supernet import SuperNetwork

logger = logging.getLogger("dsnn.checkpoint")

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
HISTORY = "history.csv"
HISTORY_FIELDS = ("step", "config", "loss", "accuracy", "sparsity")

ExportDtype = Literal["float64", "float32"]
_SUFFIX = {"float64": (".f64", "<f8"), "float32": (".f32", "<f4")}


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _history_csv(records: list[StepRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for r in records:
        writer.writerow([r.step, r.config, repr(r.loss), repr(r.accuracy), repr(r.sparsity)])
    return buf.getvalue().encode()


def _overall_hash(files: dict[str, str]) -> str:
    return _sha256("".join(f"{p}:{h}\n" for p, h in sorted(files.items())).encode())


def save_checkpoint(
    net: SuperNetwork,
    path: Path,
    data_config: dict[str, Any] | None = None,
    export_dtype: ExportDtype = "float64",
) -> Path:
    """Write ``net`` to the directory ``path``, replacing a previous checkpoint there."""
    if export_dtype not in _SUFFIX:
        raise CheckpointError(str(path), f"unknown export dtype {export_dtype!r}", exit_code=EXIT_USAGE)
    if path.exists():
        if not (path / MANIFEST).exists() and any(path.iterdir()):
            raise CheckpointError(str(path), "exists and is not a checkpoint directory", exit_code=EXIT_USAGE)
        shutil.rmtree(path)
    suffix, dtype = _SUFFIX[export_dtype]
    payloads: dict[str, bytes] = {}
    model = net.model
    for name, p in model.parameters.items():
        payloads[f"tensors/{name}{suffix}"] = p.value.astype(dtype).tobytes()
        payloads[f"ema/{name}{suffix}"] = p.ema.astype(dtype).tobytes()
    for name, g in net.score_grads.items():
        payloads[f"score_grads/{name}{suffix}"] = g.astype(dtype).tobytes()
    for config, table in net.masks.items():
        for weight, mask in table.items():
            payloads[f"masks/{config}/{weight}.mask"] = mask.to_bytes()
    for config in net.plan.sparse:
        if config.name not in net.trained_configs:
            continue
        for weight, mask in net.masks[config.name].items():
            a = from_masked_dense(model.parameters[weight].ema, mask)
            payloads[f"bsr/{config.name}/{weight}.bsr"] = a.to_bytes()
    payloads[HISTORY] = _history_csv(net.history)

    files = {rel: _sha256(data) for rel, data in payloads.items()}
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "variant": net.variant,
        "label": net.label,
        "model": model.spec(),
        "parameters": [
            {"name": n, "shape": list(p.shape), "prunable": p.prunable} for n, p in model.parameters.items()
        ],
        "plan": net.plan.to_dict(),
        "block_height": net.block_height,
        "trained_configs": list(net.trained_configs),
        "step": net.step,
        "ema_updates": net.ema_updates,
        "export_dtype": export_dtype,
        "data": data_config or {},
        "files": files,
        "hash": _overall_hash(files),
    }
    for rel, data in payloads.items():
        target = path / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info(f"Saved {net.label} checkpoint to {path} ({len(files)} files, hash {manifest['hash'][:12]})")
    return path


def read_manifest(path: Path) -> dict[str, Any]:
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise CheckpointError(str(path), "no manifest.json; not a checkpoint", exit_code=EXIT_USAGE)
    try:
        manifest: dict[str, Any] = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(str(path), f"corrupt manifest: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(str(path), f"unsupported format version {manifest.get('format_version')}")
    return manifest


def _read_payload(path: Path, rel: str, files: dict[str, str]) -> bytes:
    if rel not in files:
        raise CheckpointError(str(path), f"manifest does not list {rel}")
    try:
        data = (path / rel).read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(str(path), f"missing payload {rel}") from e
    if _sha256(data) != files[rel]:
        raise CheckpointError(str(path), f"hash mismatch for {rel}")
    return data


def verify_checkpoint(path: Path) -> dict[str, Any]:
    """Check every payload hash and the overall hash; returns the manifest."""
    manifest = read_manifest(path)
    files: dict[str, str] = manifest["files"]
    if _overall_hash(files) != manifest["hash"]:
        raise CheckpointError(str(path), "manifest hash does not match its file list")
    for rel in files:
        _read_payload(path, rel, files)
    return manifest


def _read_tensor(path: Path, rel: str, files: dict[str, str], dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    data = _read_payload(path, rel, files)
    arr = np.frombuffer(data, dtype=dtype)
    if arr.size != int(np.prod(shape)):
        raise CheckpointError(str(path), f"{rel} holds {arr.size} values, expected shape {shape}")
    return arr.reshape(shape).astype(np.float64)


def load_checkpoint(path: Path) -> SuperNetwork:
    manifest = verify_checkpoint(path)
    files: dict[str, str] = manifest["files"]
    suffix, dtype = _SUFFIX[manifest["export_dtype"]]
    model = build_model(manifest["model"])
    shapes = {p["name"]: tuple(p["shape"]) for p in manifest["parameters"]}
    if set(shapes) != set(model.parameters):
        raise CheckpointError(str(path), "parameter names do not match the model spec")
    values = {n: _read_tensor(path, f"tensors/{n}{suffix}", files, dtype, s) for n, s in shapes.items()}
    ema = {n: _read_tensor(path, f"ema/{n}{suffix}", files, dtype, s) for n, s in shapes.items()}
    model.load_values(values, ema)

    plan = SparsityPlan.from_dict(manifest["plan"])
    net = SuperNetwork.create(model, plan, manifest["block_height"], variant=manifest["variant"], label=manifest["label"])
    for w in model.prunable:
        net.score_grads[w] = _read_tensor(path, f"score_grads/{w}{suffix}", files, dtype, shapes[w])
    for config in plan.names:
        for w in model.prunable:
            mask = BinaryMask.from_bytes(_read_payload(path, f"masks/{config}/{w}.mask", files))
            if mask.shape != shapes[w]:
                raise CheckpointError(str(path), f"mask {config}/{w} has shape {mask.shape}, expected {shapes[w]}")
            net.masks[config][w] = mask
    net.trained_configs = list(manifest["trained_configs"])
    net.step = int(manifest["step"])
    net.ema_updates = int(manifest["ema_updates"])
    history = _read_payload(path, HISTORY, files).decode()
    net.history = [StepRecord.from_dict(row) for row in csv.DictReader(io.StringIO(history))]
    logger.debug(f"Loaded {net.label} checkpoint from {path}")
    return net


def load_bsr(path: Path, config: str, weight: str) -> BlockCsrMatrix:
    """Read one exported block-CSR weight."""
    manifest = read_manifest(path)
    return BlockCsrMatrix.from_bytes(_read_payload(path, f"bsr/{config}/{weight}.bsr", manifest["files"]))
