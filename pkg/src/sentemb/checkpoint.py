"""Binary checkpoint persistence.

Byte layout (all integers little-endian):

    magic            4 bytes  b"ST5F"
    format version   u32      currently 1
    config JSON      u32 length + UTF-8 payload (ModelConfig fields)
    model tensors    named tensor table
    optimizer slots  named tensor table
    step counter     u64

A named tensor table is a u32 count followed by entries of
``u16 name-length, name UTF-8, u8 ndim, ndim x u32 dims, raw f64 LE data``.
Values are written raw, so a save/load round trip is bit-exact. Unknown
versions are rejected; any short read raises a truncation error.

The trainer's projection matrix travels in the model table under the
reserved name ``projection`` so one file restores everything an embedding
run needs.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .backbone import EncoderDecoderModel, ModelConfig, parameter_shapes
from .errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    NotACheckpointError,
    TruncatedCheckpointError,
)
from .tensor import Tensor

MAGIC = b"ST5F"
FORMAT_VERSION = 1
PROJECTION_NAME = "projection"


@dataclass
class LoadedCheckpoint:
    model: EncoderDecoderModel
    projection: Tensor | None
    optimizer_state: dict[str, np.ndarray]
    step: int


def _write_tensor_table(buf: io.BytesIO, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(buf: io.BufferedReader, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise TruncatedCheckpointError(
            f"checkpoint ended early: wanted {n} bytes, got {len(data)}"
        )
    return data


def _read_tensor_table(buf) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(buf, 1))
        shape = tuple(struct.unpack("<I", _read_exact(buf, 4))[0] for _ in range(ndim))
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        arr = np.frombuffer(_read_exact(buf, nbytes), dtype="<f8").reshape(shape)
        out[name] = arr.astype(np.float64)
    return out


def save_checkpoint(
    model: EncoderDecoderModel,
    optimizer_state: dict[str, np.ndarray],
    step: int,
    path: str,
    projection: Tensor | None = None,
) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(config_blob)))
    buf.write(config_blob)
    tensors = {name: p.data for name, p in model.parameters().items()}
    if projection is not None:
        tensors[PROJECTION_NAME] = projection.data
    _write_tensor_table(buf, tensors)
    _write_tensor_table(buf, dict(optimizer_state))
    buf.write(struct.pack("<Q", step))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str, expected_config: ModelConfig | None = None) -> LoadedCheckpoint:
    """Restore a checkpoint; optionally verify shapes against a config.

    With ``expected_config`` given, every stored model tensor must match the
    shape that config implies; the first mismatch is reported by name.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise NotACheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
            )
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config = ModelConfig.from_dict(json.loads(_read_exact(fh, cfg_len).decode("utf-8")))
        tensors = _read_tensor_table(fh)
        optimizer_state = _read_tensor_table(fh)
        (step,) = struct.unpack("<Q", _read_exact(fh, 8))

    check_against = expected_config if expected_config is not None else config
    expected = parameter_shapes(check_against)
    expected[PROJECTION_NAME] = (check_against.d_model, check_against.embed_dim)
    for name, arr in tensors.items():
        want = expected.get(name)
        if want is None:
            raise CheckpointShapeError(f"{path}: unexpected tensor {name!r}")
        if arr.shape != want:
            raise CheckpointShapeError(
                f"{path}: tensor {name!r} has shape {arr.shape}, expected {want}"
            )
    missing = [n for n in parameter_shapes(check_against) if n not in tensors]
    if missing:
        raise CheckpointShapeError(f"{path}: missing tensor {missing[0]!r}")

    projection = None
    if PROJECTION_NAME in tensors:
        projection = Tensor(tensors.pop(PROJECTION_NAME), requires_grad=True)
    params = {name: Tensor(arr, requires_grad=True) for name, arr in tensors.items()}
    model = EncoderDecoderModel(config, params)
    return LoadedCheckpoint(
        model=model, projection=projection, optimizer_state=optimizer_state, step=step
    )
