from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.exceptions import ShapeError


@dataclass(frozen=True)
class FeatureMap:
    """Dense H×W×C grid of finite reals, row-major (row, col, channel)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ShapeError(f"feature map must be H×W×C with every dim >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("feature map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "FeatureMap":
        return cls(np.zeros((height, width, channels)))


@dataclass(frozen=True)
class CoordGrid:
    """Per-cell (x, y) sampling coordinates; x addresses columns, y rows."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ShapeError(f"coord grid must be H×W×2, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def height(self) -> int:
        return self.coords.shape[0]

    @property
    def width(self) -> int:
        return self.coords.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.coords[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.coords[..., 1]

    @classmethod
    def from_xy(cls, x: np.ndarray, y: np.ndarray) -> "CoordGrid":
        return cls(np.stack([x, y], axis=-1))

    @classmethod
    def lattice(cls, height: int, width: int) -> "CoordGrid":
        rows, cols = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
        return cls.from_xy(cols, rows)
