"""Binary checkpoint format: model config, tensors, optimizer state, metadata.

Layout: magic ``INUC``, little-endian u32 format version, little-endian u64
header length, UTF-8 JSON header (config, flags, metadata, optimizer
hyperparameters, tensor manifest with name/dtype/shape/byte offset), then the
raw little-endian 32-bit float blobs in manifest order.

The header JSON is canonical (sorted keys, no whitespace), so
serialize -> deserialize -> serialize is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .model import Model, ModelConfig, build
from .optim import AdamState
from .tensor import Tensor, as_array

MAGIC = b"INUC"
FORMAT_VERSION = 1

_HEAD = struct.Struct("<IQ")  # version, header length


@dataclass
class LoadedCheckpoint:
    """A deserialized checkpoint: rebuilt model plus optimizer and metadata."""

    model: Model
    adam: AdamState | None
    metadata: dict


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_bytes(model: Model, adam: AdamState | None = None,
                     metadata: dict | None = None) -> bytes:
    """Serialize a model (and optionally Adam state) to checkpoint bytes."""
    if model.dtype != np.dtype(np.float32):
        raise CheckpointError(
            "checkpoints store 32-bit tensors; 64-bit models are for gradient checking only"
        )
    tensors: list[tuple[str, np.ndarray]] = []
    for p in model.store:
        tensors.append((p.name, as_array(p.value)))
    optimizer = None
    if adam is not None:
        optimizer = {
            "type": "adam", "lr": adam.lr, "beta1": adam.beta1,
            "beta2": adam.beta2, "eps": adam.eps, "step": adam.step,
        }
        for name in model.store.names():
            if name in adam.m:
                tensors.append((f"adam.m.{name}", adam.m[name]))
                tensors.append((f"adam.v.{name}", adam.v[name]))
    manifest = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({
            "name": name, "dtype": "f32", "shape": list(arr.shape), "offset": offset,
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "bn_initialized": {
            layer.name: layer.initialized for layer in model.batchnorm_layers()
        },
        "metadata": metadata or {},
        "optimizer": optimizer,
        "tensors": manifest,
    }
    encoded = _canonical_json(header)
    return MAGIC + _HEAD.pack(FORMAT_VERSION, len(encoded)) + encoded + b"".join(blobs)


def save_checkpoint(model: Model, path, adam: AdamState | None = None,
                    metadata: dict | None = None) -> None:
    data = checkpoint_bytes(model, adam=adam, metadata=metadata)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint_bytes(data: bytes, config: ModelConfig | None = None) -> LoadedCheckpoint:
    """Deserialize checkpoint bytes into a rebuilt model.

    If ``config`` is given, the stored tensors are loaded into a model built
    from it; shape disagreements (e.g. a different num_classes) raise
    CheckpointError.
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    if len(data) < 4 + _HEAD.size:
        raise CheckpointError(f"truncated checkpoint: {len(data)} bytes")
    version, header_len = _HEAD.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_end = 4 + _HEAD.size + header_len
    if len(data) < header_end:
        raise CheckpointError(f"truncated checkpoint: header needs {header_end} bytes")
    try:
        header = json.loads(data[4 + _HEAD.size : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc

    stored_config = ModelConfig.from_dict(header["config"])
    model = build(config if config is not None else stored_config)

    blob = data[header_end:]
    tensors = {}
    for entry in header["tensors"]:
        if entry["dtype"] != "f32":
            raise CheckpointError(f"tensor {entry['name']}: unsupported dtype {entry['dtype']}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(blob):
            raise CheckpointError(
                f"truncated checkpoint: tensor {entry['name']} needs bytes "
                f"[{start}, {end}) of {len(blob)}"
            )
        tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=count,
                                               offset=start).reshape(shape)

    for p in model.store:
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {p.name!r}")
        arr = tensors.pop(p.name)
        if arr.shape != p.value.shape:
            raise CheckpointError(
                f"tensor {p.name!r}: stored shape {arr.shape} does not match "
                f"model shape {p.value.shape}"
            )
        p.value = Tensor(arr)

    adam = None
    opt = header.get("optimizer")
    if opt is not None:
        adam = AdamState(lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"],
                         eps=opt["eps"], step=opt["step"])
        for p in model.store.trainable():
            for moment, dest in (("m", adam.m), ("v", adam.v)):
                key = f"adam.{moment}.{p.name}"
                if key not in tensors:
                    raise CheckpointError(f"checkpoint is missing tensor {key!r}")
                arr = tensors.pop(key)
                if arr.shape != p.value.shape:
                    raise CheckpointError(f"tensor {key!r}: shape mismatch")
                dest[p.name] = np.array(arr)
    if tensors:
        raise CheckpointError(f"checkpoint holds unexpected tensors: {sorted(tensors)}")

    flags = header.get("bn_initialized", {})
    for layer in model.batchnorm_layers():
        layer.initialized = bool(flags.get(layer.name, False))

    return LoadedCheckpoint(model=model, adam=adam, metadata=header.get("metadata", {}))


def load_checkpoint(path, config: ModelConfig | None = None) -> LoadedCheckpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    return load_checkpoint_bytes(data, config=config)
