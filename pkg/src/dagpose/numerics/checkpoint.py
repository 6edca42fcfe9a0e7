"""Checkpoint container.

Layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON header
mapping each tensor name to ``{"shape", "dtype", "offset", "nbytes"}`` (offsets
relative to the end of the header) plus an optional ``"__metadata__"`` object,
then the raw little-endian tensor bytes in header order.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

_DTYPES = {"float64": "<f8", "float32": "<f4"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors, metadata=None):
    """Write ``{name: array}`` (arrays or Tensors) to ``path``."""
    header = {}
    blobs = []
    offset = 0
    for name, value in tensors.items():
        arr = np.asarray(getattr(value, "data", value))
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {dtype} for {name!r}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        header[name] = {"shape": list(arr.shape), "dtype": dtype, "offset": offset,
                        "nbytes": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    if metadata is not None:
        header["__metadata__"] = metadata
    head = json.dumps(header, sort_keys=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def read_checkpoint(path):
    """Return ``(arrays, metadata)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        prefix = fh.read(8)
        if len(prefix) != 8:
            raise CheckpointError(f"{path}: truncated header")
        (n,) = struct.unpack("<Q", prefix)
        if n > os.fstat(fh.fileno()).st_size - 8:
            raise CheckpointError(f"{path}: header length {n} exceeds file size")
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
            if not isinstance(header, dict):
                raise CheckpointError(f"{path}: header is not a JSON object")
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: malformed JSON header") from exc
        body = fh.read()
    metadata = header.pop("__metadata__", None)
    arrays = {}
    for name, info in header.items():
        dtype = info.get("dtype")
        if dtype not in _DTYPES:
            raise CheckpointError(f"{path}: tensor {name!r} has unsupported dtype {dtype!r}")
        start, size = int(info["offset"]), int(info["nbytes"])
        if start + size > len(body):
            raise CheckpointError(f"{path}: tensor {name!r} runs past end of file")
        arr = np.frombuffer(body[start:start + size], dtype=_DTYPES[dtype])
        shape = tuple(info["shape"])
        if int(np.prod(shape, dtype=np.int64)) != arr.size:
            raise CheckpointError(f"{path}: tensor {name!r} byte count does not match shape {shape}")
        arrays[name] = arr.reshape(shape).astype(dtype)
    return arrays, metadata


def load_into(params, arrays, strict=True):
    """Copy ``arrays`` into the ``{name: Tensor}`` ``params`` after shape validation."""
    missing = [k for k in params if k not in arrays]
    unexpected = [k for k in arrays if k not in params]
    if strict and (missing or unexpected):
        raise CheckpointError(f"checkpoint does not match model: missing={missing} unexpected={unexpected}")
    for name, p in params.items():
        if name not in arrays:
            continue
        arr = arrays[name]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape}, model {p.data.shape}")
        p.data = arr.astype(p.data.dtype).copy()
