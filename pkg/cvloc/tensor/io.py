"""
Binary artifact I/O: CVWT weight stores, CVFM feature maps, CVFL flow fields.

All three share a header of 4 magic bytes followed by a u16 version, and store
values as little-endian float32 in row-major order.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np

from ..core.exceptions import FormatError, ShapeError
from ..flow.base import FlowField
from . import formats
from .feature_map import FeatureMap

log = logging.getLogger(__name__)


# =========================
# Weight store
# =========================

@dataclass
class WeightStore:
    """Named float32 tensors. Lookups never reshape."""

    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def put(self, name: str, values: np.ndarray) -> None:
        arr = np.ascontiguousarray(values, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ShapeError(f"tensor {name!r} contains non-finite values")
        self.tensors[name] = arr

    def get(self, name: str, shape: Tuple[int, ...] | None = None) -> np.ndarray:
        if name not in self.tensors:
            raise ShapeError(f"missing weight tensor {name!r}")
        arr = self.tensors[name]
        if shape is not None and tuple(arr.shape) != tuple(shape):
            raise ShapeError(f"weight tensor {name!r} has shape {arr.shape}, expected {tuple(shape)}")
        return arr.astype(np.float64)

    def has(self, name: str) -> bool:
        return name in self.tensors

    def shape_of(self, name: str) -> Tuple[int, ...]:
        if name not in self.tensors:
            raise ShapeError(f"missing weight tensor {name!r}")
        return tuple(self.tensors[name].shape)

    def names(self) -> list[str]:
        return list(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)


# =========================
# Byte reader
# =========================

class _Reader:
    def __init__(self, buf: bytes, path: str | None):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if n < 0:
            raise FormatError(f"negative length {n}", self.pos, self.path)
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated: need {n} bytes, {len(self.buf) - self.pos} left", self.pos, self.path)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype=formats.FLOAT32).copy()

    def header(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0, self.path)
        at = self.pos
        version = self.unpack(formats.U16)
        if version != formats.FORMAT_VERSION:
            raise FormatError(f"unsupported version {version}", at, self.path)

    def finish(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes", self.pos, self.path)


def _header(magic: bytes) -> bytes:
    return magic + struct.pack(formats.U16, formats.FORMAT_VERSION)


def _f32(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype=formats.FLOAT32).tobytes()


# =========================
# CVWT
# =========================

def encode_weights(store: WeightStore) -> bytes:
    parts = [_header(formats.WEIGHTS_MAGIC), struct.pack(formats.U32, len(store))]
    for name in store:
        arr = store.tensors[name]
        raw = name.encode("utf-8")
        parts.append(struct.pack(formats.U16, len(raw)))
        parts.append(raw)
        parts.append(struct.pack(formats.U8, arr.ndim))
        parts.extend(struct.pack(formats.U32, d) for d in arr.shape)
        parts.append(_f32(arr))
    return b"".join(parts)


def decode_weights(buf: bytes, path: str | None = None) -> WeightStore:
    r = _Reader(buf, path)
    r.header(formats.WEIGHTS_MAGIC)
    count = r.unpack(formats.U32)
    store = WeightStore()
    for _ in range(count):
        at = r.pos
        name_len = r.unpack(formats.U16)
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"tensor name is not UTF-8: {e}", at, path) from e
        rank = r.unpack(formats.U8)
        dims = tuple(r.unpack(formats.U32) for _ in range(rank))
        if name in store.tensors:
            raise FormatError(f"duplicate tensor {name!r}", at, path)
        data_at = r.pos
        values = r.floats(math.prod(dims))
        if not np.all(np.isfinite(values)):
            raise FormatError(f"tensor {name!r} contains non-finite values", data_at, path)
        store.put(name, values.reshape(dims))
    r.finish()
    return store


def save_weights(store: WeightStore, path: str | Path) -> None:
    Path(path).write_bytes(encode_weights(store))
    log.debug("wrote %d tensors to %s", len(store), path)


def load_weights(path: str | Path) -> WeightStore:
    store = decode_weights(Path(path).read_bytes(), str(path))
    log.debug("loaded %d tensors from %s", len(store), path)
    return store


# =========================
# CVFM
# =========================

def encode_feature_map(fm: FeatureMap) -> bytes:
    dims = struct.pack(formats.U32, fm.height) + struct.pack(formats.U32, fm.width) + struct.pack(formats.U32, fm.channels)
    return _header(formats.FEATURE_MAP_MAGIC) + dims + _f32(fm.data)


def decode_feature_map(buf: bytes, path: str | None = None) -> FeatureMap:
    r = _Reader(buf, path)
    r.header(formats.FEATURE_MAP_MAGIC)
    at = r.pos
    h, w, c = (r.unpack(formats.U32) for _ in range(3))
    if min(h, w, c) < 1:
        raise FormatError(f"feature map dims {h}×{w}×{c} must all be >= 1", at, path)
    values = r.floats(h * w * c).reshape(h, w, c)
    r.finish()
    return FeatureMap(values.astype(np.float64))


def save_feature_map(fm: FeatureMap, path: str | Path) -> None:
    Path(path).write_bytes(encode_feature_map(fm))


def load_feature_map(path: str | Path) -> FeatureMap:
    return decode_feature_map(Path(path).read_bytes(), str(path))


# =========================
# CVFL
# =========================

def encode_flow(flow: FlowField) -> bytes:
    cells = np.stack(
        [flow.flow[..., 0], flow.flow[..., 1], flow.score, flow.visibility.astype(np.float64)],
        axis=-1,
    )
    dims = struct.pack(formats.U32, flow.height) + struct.pack(formats.U32, flow.width)
    return _header(formats.FLOW_MAGIC) + dims + _f32(cells)


def decode_flow(buf: bytes, path: str | None = None) -> FlowField:
    r = _Reader(buf, path)
    r.header(formats.FLOW_MAGIC)
    h = r.unpack(formats.U32)
    w = r.unpack(formats.U32)
    at = r.pos
    cells = r.floats(h * w * 4).reshape(h, w, 4).astype(np.float64)
    r.finish()
    vis = cells[..., 3]
    if not np.all((vis == 0.0) | (vis == 1.0)):
        raise FormatError("visibility values must be 0 or 1", at, path)
    return FlowField(flow=cells[..., :2], score=cells[..., 2], visibility=vis.astype(np.uint8))


def save_flow(flow: FlowField, path: str | Path) -> None:
    Path(path).write_bytes(encode_flow(flow))


def load_flow(path: str | Path) -> FlowField:
    return decode_flow(Path(path).read_bytes(), str(path))
