from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from ..core.exceptions import ConfigError


def wrap_angle(a: float) -> float:
    """Wrap to (-π, π]."""
    r = math.remainder(a, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Se2Pose:
    """
    Planar rigid transform p̂ = R(theta) p' + t in satellite pixels.

    Pixel frames have x to the right and y down, so a positive theta turns
    clockwise on a north-up map (compass sense).
    """

    theta: float = 0.0
    tu: float = 0.0
    tv: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "tu", float(self.tu))
        object.__setattr__(self, "tv", float(self.tv))

    @property
    def t(self) -> np.ndarray:
        return np.array([self.tu, self.tv])

    @property
    def R(self) -> np.ndarray:
        return rotation(self.theta)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self.R.T + self.t

    def inverse(self) -> "Se2Pose":
        r_t = self.R.T
        t = -r_t @ self.t
        return Se2Pose(-self.theta, t[0], t[1])

    def compose(self, other: "Se2Pose") -> "Se2Pose":
        """self ∘ other: apply `other` first."""
        t = self.R @ other.t + self.t
        return Se2Pose(self.theta + other.theta, t[0], t[1])

    @classmethod
    def about(cls, theta: float, pivot: np.ndarray, shift: np.ndarray) -> "Se2Pose":
        """Rotate by theta about `pivot`, then move the pivot by `shift`."""
        pivot = np.asarray(pivot, dtype=np.float64)
        t = pivot + np.asarray(shift, dtype=np.float64) - rotation(theta) @ pivot
        return cls(theta, t[0], t[1])


def se2_apply(pose: Se2Pose, points: np.ndarray) -> np.ndarray:
    return pose.apply(points)


# =========================
# Pose JSON
# =========================

class PoseFile(BaseModel):
    """Pose JSON as written by `solve`; extra keys (azimuth, pos_m, ...) are ignored on read."""

    theta_rad: float
    tu_px: float
    tv_px: float


def load_pose(path: str | Path) -> Se2Pose:
    try:
        doc = PoseFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (ValidationError, OSError) as e:
        raise ConfigError(f"{path}: {e}") from e
    return Se2Pose(doc.theta_rad, doc.tu_px, doc.tv_px)


def pose_to_json(pose: Se2Pose) -> dict:
    return {"theta_rad": pose.theta, "tu_px": pose.tu, "tv_px": pose.tv}
