"""Self-describing binary checkpoints.

Layout: the magic string ``SAMBA1``, a little-endian uint32 header length, a
UTF-8 JSON header (hyperparameters, free-form metadata, and the name/shape of
every array), then the raw little-endian float64 payload of each named
parameter followed by each named buffer, in header order.  Loading restores
bit-identical values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .model import HyperParams, SambaModel, init_model
from .tensor import Tensor

MAGIC = b"SAMBA1"


class CorruptCheckpointError(ValueError):
    """File is not a readable checkpoint."""


def save_checkpoint(
    path,
    model: SambaModel,
    meta: dict | None = None,
    buffers: dict[str, np.ndarray] | None = None,
) -> None:
    """Write the model, optional metadata, and non-learnable buffers."""
    buffers = buffers or {}
    params = model.named_parameters()
    header = {
        "hyper": asdict(model.hyper),
        "meta": meta or {},
        "params": [{"name": n, "shape": list(t.shape)} for n, t in params],
        "buffers": [
            {"name": n, "shape": list(np.asarray(b).shape)}
            for n, b in buffers.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in params:
            fh.write(np.ascontiguousarray(t.data).astype("<f8").tobytes())
        for _, b in buffers.items():
            fh.write(np.ascontiguousarray(b, dtype=np.float64).astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[SambaModel, dict, dict[str, np.ndarray]]:
    """Read a checkpoint back into a model, its metadata, and its buffers."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CorruptCheckpointError(
                f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
            )
        (header_len,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise CorruptCheckpointError(f"{path}: unreadable header") from err

        def read_array(shape) -> np.ndarray:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise CorruptCheckpointError(f"{path}: truncated payload")
            return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

        hyper = HyperParams(**header["hyper"])
        model = init_model(hyper, seed=0)
        by_name = dict(model.named_parameters())
        stored = {entry["name"]: entry["shape"] for entry in header["params"]}
        expected = {n: list(t.shape) for n, t in by_name.items()}
        if stored != expected:
            raise CorruptCheckpointError(
                f"{path}: parameter table does not match the architecture"
            )
        for entry in header["params"]:
            by_name[entry["name"]].data[...] = read_array(entry["shape"])
        bufs = {
            entry["name"]: read_array(entry["shape"])
            for entry in header["buffers"]
        }
    return model, header["meta"], bufs
