"""Binary checkpoint container.

Layout (little-endian)::

    b"CAREGNN\\0"  | u32 format version | u64 manifest length | manifest (UTF-8 JSON)
    then per tensor: u16 name length | name | u8 ndim | u32 * ndim shape | float64 data

The manifest records the model shape, controller state, optimizer scalars,
the training epoch and the tensor order. Tensors round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import CareModel, ModelShape
from .numeric import AdamState
from .selector import ThresholdController

MAGIC = b"CAREGNN\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_tensors(path, tensors: dict[str, np.ndarray], manifest: dict) -> None:
    manifest = dict(manifest, format_version=FORMAT_VERSION, tensors=list(tensors))
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for name, arr in tensors.items():
            _write_tensor(fh, name, arr)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        version, length = struct.unpack("<IQ", _read_exact(fh, 12))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        manifest = json.loads(_read_exact(fh, length).decode("utf-8"))
        tensors = {}
        for expected in manifest["tensors"]:
            name, arr = _read_tensor(fh)
            if name != expected:
                raise CheckpointError(f"tensor order mismatch: {name} != {expected}")
            tensors[name] = arr
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor")
    return tensors, manifest


def save_checkpoint(path, model: CareModel, optimizer: AdamState | None = None,
                    epoch: int = 0, extra: dict | None = None) -> None:
    tensors = {f"param/{k}": v for k, v in model.params.items()}
    adam = None
    if optimizer is not None:
        tensors.update({f"adam_m/{k}": v for k, v in optimizer.first.items()})
        tensors.update({f"adam_v/{k}": v for k, v in optimizer.second.items()})
        adam = {"step": optimizer.step, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                "eps": optimizer.eps}
    s = model.shape
    manifest = {
        "shape": {"feature_dim": s.feature_dim, "num_relations": s.num_relations,
                  "embedding_dim": s.embedding_dim, "num_layers": s.num_layers, "variant": s.variant},
        "controller": model.controller.state_dict(),
        "adam": adam,
        "epoch": epoch,
        "extra": extra or {},
    }
    save_tensors(path, tensors, manifest)


def load_checkpoint(path) -> tuple[CareModel, AdamState | None, dict]:
    """Return (model, optimizer state or None, manifest)."""
    tensors, manifest = load_tensors(path)
    try:
        shape = ModelShape(**manifest["shape"])
        params = {k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")}
        model = CareModel(shape, params, ThresholdController.from_state_dict(manifest["controller"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint contents: {exc}") from None
    optimizer = None
    if manifest.get("adam"):
        a = manifest["adam"]
        optimizer = AdamState(
            {k[len("adam_m/"):]: v for k, v in tensors.items() if k.startswith("adam_m/")},
            {k[len("adam_v/"):]: v for k, v in tensors.items() if k.startswith("adam_v/")},
            step=a["step"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
    return model, optimizer, manifest
