from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..core.exceptions import ConfigError, GeometryError


# =========================
# JSON schemas
# =========================

class CameraFile(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    image_h: int = Field(gt=0)
    image_w: int = Field(gt=0)
    R: List[float] = Field(min_length=9, max_length=9)
    t: List[float] = Field(min_length=3, max_length=3)


class GridFile(BaseModel):
    size: int = Field(gt=0)
    meters_per_pixel: float
    height_m: float
    anchor: List[float] = Field(min_length=2, max_length=2)


def _read_json(model, path: str | Path):
    try:
        return model.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e


# =========================
# Camera
# =========================

@dataclass(frozen=True)
class CameraModel:
    """
    Pinhole camera. (R, t) maps the camera-centered ground frame to the camera
    frame. The ground frame has X east (BEV columns), Y south (BEV rows) and
    Z down, so a ground point is x^W = (X, Y, h).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    image_h: int
    image_w: int
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.image_h < 1 or self.image_w < 1:
            raise GeometryError(f"image size must be positive, got {self.image_h}×{self.image_w}")
        if not np.allclose(R @ R.T, np.eye(3), rtol=0.0, atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise GeometryError("extrinsic rotation must be orthonormal with determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_file(cls, doc: CameraFile) -> "CameraModel":
        return cls(doc.fx, doc.fy, doc.cx, doc.cy, doc.image_h, doc.image_w, np.array(doc.R), np.array(doc.t))

    @classmethod
    def load(cls, path: str | Path) -> "CameraModel":
        return cls.from_file(_read_json(CameraFile, path))

    def to_file(self) -> CameraFile:
        return CameraFile(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            image_h=self.image_h, image_w=self.image_w,
            R=self.R.reshape(-1).tolist(), t=self.t.tolist(),
        )


# standard camera-frame orientations in the ground frame
NADIR = np.eye(3)
FORWARD_NORTH = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


# =========================
# BEV grid
# =========================

@dataclass(frozen=True)
class BevGrid:
    """Square bird's-eye grid; the camera sits over `anchor` (x = col, y = row)."""

    size: int
    meters_per_pixel: float
    height_m: float
    anchor: Tuple[float, float]

    def __post_init__(self):
        if self.size < 1:
            raise GeometryError(f"grid size must be >= 1, got {self.size}")
        if self.meters_per_pixel <= 0:
            raise GeometryError(f"meters_per_pixel must be > 0, got {self.meters_per_pixel}")
        ax, ay = (float(v) for v in self.anchor)
        if not (0.0 <= ax <= self.size - 1 and 0.0 <= ay <= self.size - 1):
            raise GeometryError(f"anchor ({ax}, {ay}) lies outside the {self.size}×{self.size} grid")
        object.__setattr__(self, "anchor", (ax, ay))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    @property
    def anchor_xy(self) -> np.ndarray:
        return np.array(self.anchor)

    def cells(self) -> np.ndarray:
        """Cell coordinates p' as size×size×2 (x = col, y = row)."""
        rows, cols = np.meshgrid(np.arange(self.size, dtype=np.float64), np.arange(self.size, dtype=np.float64), indexing="ij")
        return np.stack([cols, rows], axis=-1)

    def ground_points(self) -> np.ndarray:
        """World points (X, Y, h) in meters for every cell, size×size×3."""
        cells = self.cells()
        xy = (cells - self.anchor_xy) * self.meters_per_pixel
        h = np.full(cells.shape[:2] + (1,), self.height_m)
        return np.concatenate([xy, h], axis=-1)

    @classmethod
    def centered(cls, size: int, meters_per_pixel: float, height_m: float) -> "BevGrid":
        c = (size - 1) / 2.0
        return cls(size, meters_per_pixel, height_m, (c, c))

    @classmethod
    def from_file(cls, doc: GridFile) -> "BevGrid":
        return cls(doc.size, doc.meters_per_pixel, doc.height_m, tuple(doc.anchor))

    @classmethod
    def load(cls, path: str | Path) -> "BevGrid":
        return cls.from_file(_read_json(GridFile, path))

    def to_file(self) -> GridFile:
        return GridFile(size=self.size, meters_per_pixel=self.meters_per_pixel, height_m=self.height_m, anchor=list(self.anchor))
