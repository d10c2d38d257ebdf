"""Binary weight files.

Layout (little-endian):
    magic "TNSW" | u32 version=1
    u32 x7 config: cells_per_block, num_blocks, base_filters, dense_units,
                   window, width, height
    u32 tensor count
    per tensor: u16 name length | name bytes (utf-8) | u8 rank |
                u32 x rank extents | float32 payload (row-major)
    u32 CRC-32 of all preceding bytes

Tensors are written in the canonical :func:`transnet.model.parameter_shapes`
order; the dense head consumes per-frame features flattened row-major
[H, W, C], so checkpoints are interchangeable between writers that honor
this order.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import ModelConfig, WeightStore, parameter_shapes

MAGIC = b"TNSW"
VERSION = 1


def save_weights(store: WeightStore, config: ModelConfig, path: str | Path) -> None:
    """Write ``store`` for ``config``; the name set must match exactly."""
    expected = parameter_shapes(config)
    unknown = set(store) - set(expected)
    if unknown:
        raise FormatError(f"unknown parameter name(s) {sorted(unknown)}")
    missing = set(expected) - set(store)
    if missing:
        raise FormatError(f"weight store is missing parameter(s) {sorted(missing)}")
    parts = [
        MAGIC,
        struct.pack(
            "<8I",
            VERSION,
            config.cells_per_block,
            config.num_blocks,
            config.base_filters,
            config.dense_units,
            config.window,
            config.width,
            config.height,
        ),
        struct.pack("<I", len(expected)),
    ]
    for name in expected:
        tensor = np.ascontiguousarray(store[name], dtype="<f4")
        if tensor.shape != expected[name]:
            raise FormatError(
                f"parameter {name!r} has shape {store[name].shape}, expected {expected[name]}"
            )
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    Path(path).write_bytes(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated weight file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_weights(path: str | Path) -> tuple[ModelConfig, WeightStore]:
    """Read a weight file back into (config, store); round-trip is bit-exact."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4:
        raise FormatError("truncated weight file")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, not a weight file")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise FormatError("weight file checksum mismatch")
    r = _Reader(data[:-4])
    r.take(4)  # magic
    version = r.u("<I")
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    cells, blocks, filters, dense, window, width, height = struct.unpack("<7I", r.take(28))
    config = ModelConfig(
        cells_per_block=cells,
        num_blocks=blocks,
        base_filters=filters,
        dense_units=dense,
        window=window,
        width=width,
        height=height,
    )
    expected = parameter_shapes(config)
    count = r.u("<I")
    store: WeightStore = {}
    for _ in range(count):
        name_len = r.u("<H")
        name = r.take(name_len).decode("utf-8")
        if name not in expected:
            raise FormatError(f"unknown parameter name {name!r} in weight file")
        rank = r.u("<B")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        if shape != expected[name]:
            raise FormatError(
                f"parameter {name!r} has shape {shape}, expected {expected[name]}"
            )
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(4 * size)
        store[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last tensor in weight file")
    missing = set(expected) - set(store)
    if missing:
        raise FormatError(f"weight file is missing parameter(s) {sorted(missing)}")
    return config, store
