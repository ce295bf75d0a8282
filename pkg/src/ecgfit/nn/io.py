"""Model file container.

Layout (all integers little-endian)::

    magic        6 bytes  b"ECGFIT"
    version      uint16
    header_len   uint32
    header       UTF-8 JSON: {"arch": {...}, "meta": {...},
                              "tensors": [{"name", "shape", "offset", "count"}, ...]}
    payload      float64 little-endian values, tensors back to back;
                 "offset" counts values from the start of the payload
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .model import ArchConfig, MtlModel, expected_shapes

MAGIC = b"ECGFIT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<6sHI")

log = logging.getLogger(__name__)


class ModelFormatError(ValueError):
    pass


def _jsonable(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


def save_model(model: MtlModel, path) -> int:
    """Write ``model`` to ``path``; logs and returns the trainable-parameter count."""
    names = sorted(model.params)
    tensors, offset = [], 0
    for name in names:
        arr = model.params[name]
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
    count = model.parameter_count()
    header = json.dumps(
        {"arch": model.arch.to_dict(), "meta": _jsonable(model.meta),
         "parameter_count": count, "tensors": tensors},
        sort_keys=True,
    ).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    log.info("saved model with %d trainable parameters to %s", count, path)
    print(f"trainable parameters: {count}")
    return count


def load_model(path) -> MtlModel:
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size
    if len(blob) < start + header_len:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from None
    payload = memoryview(blob)[start + header_len:]
    try:
        arch_d = dict(header["arch"])
        arch_d["shared_hidden"] = tuple(arch_d["shared_hidden"])
        arch = ArchConfig(**arch_d)
        tensors = header["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed header ({exc})") from None
    total = sum(t["count"] for t in tensors)
    if len(payload) != 8 * total:
        raise ModelFormatError(
            f"{path}: payload holds {len(payload)} bytes, header describes {8 * total}"
        )
    values = np.frombuffer(payload, dtype="<f8")
    shapes = expected_shapes(arch)
    params = {}
    for t in tensors:
        shape = tuple(t["shape"])
        if shapes.get(t["name"]) != shape or int(np.prod(shape)) != t["count"]:
            raise ModelFormatError(f"{path}: tensor {t['name']} has unexpected shape {shape}")
        params[t["name"]] = values[t["offset"]:t["offset"] + t["count"]].reshape(shape).astype(np.float64)
    if set(params) != set(shapes):
        raise ModelFormatError(f"{path}: tensor set does not match the architecture")
    return MtlModel(arch, params, dict(header.get("meta", {})))
