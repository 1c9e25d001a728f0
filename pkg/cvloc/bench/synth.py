"""
Seeded synthetic oracles: weighted correspondence sets with noise and
outliers, and rigid planar scenes (satellite texture + its warped BEV view)
with a known pose.

Every generator takes its randomness from `trial_rng(seed, trial)`, a
counter-based stream, so trials are independent and can run in any order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter

from ..core.exceptions import GeometryError
from ..geometry.camera import BevGrid
from ..geometry.se2 import Se2Pose
from ..solver.matches import MatchSet
from ..tensor.feature_map import CoordGrid, FeatureMap
from ..tensor.ops import bilinear_sample

log = logging.getLogger(__name__)


class SynthConfig(BaseModel):
    seed: int = 0
    trials: int = Field(100, ge=1)

    # scene
    grid_size: int = Field(64, ge=2)
    sat_size: Optional[int] = Field(None, ge=2)
    channels: int = Field(8, ge=1)
    smoothing_sigma: float = Field(2.0, ge=0.0)
    meters_per_pixel: float = Field(0.2, gt=0.0)
    camera_height_m: float = Field(1.65, gt=0.0)

    # correspondences
    n_matches: int = Field(100, ge=3)
    noise_sigma: float = Field(0.0, ge=0.0)
    outlier_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    outlier_weight_max: float = Field(0.1, ge=0.0)

    # pose prior
    rotation_deg: float = Field(10.0, ge=0.0)
    translation_px: float = Field(12.0, ge=0.0)

    @property
    def satellite_size(self) -> int:
        return self.sat_size if self.sat_size is not None else self.grid_size

    def grid(self) -> BevGrid:
        return BevGrid.centered(self.grid_size, self.meters_per_pixel, self.camera_height_m)


@dataclass(frozen=True)
class SynthSample:
    pose: Se2Pose
    matches: Optional[MatchSet] = None
    inliers: Optional[np.ndarray] = None
    f_s: Optional[FeatureMap] = None
    f_bev: Optional[FeatureMap] = None
    visibility: Optional[np.ndarray] = None


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


def gen_pose(
    cfg: SynthConfig,
    pivot: Tuple[float, float] = (0.0, 0.0),
    rng: Optional[np.random.Generator] = None,
    shift: Tuple[float, float] = (0.0, 0.0),
) -> Se2Pose:
    """
    Uniform rotation in ±rotation_deg about `pivot`, then a uniform
    ±translation_px move of the pivot (added to the fixed `shift`).
    """
    rng = rng or trial_rng(cfg.seed)
    r = math.radians(cfg.rotation_deg)
    theta = rng.uniform(-r, r)
    delta = rng.uniform(-cfg.translation_px, cfg.translation_px, size=2)
    return Se2Pose.about(theta, np.asarray(pivot, dtype=np.float64), delta + np.asarray(shift, dtype=np.float64))


def gen_matches(cfg: SynthConfig, rng: Optional[np.random.Generator] = None) -> SynthSample:
    """
    Inliers: p̂ = R p' + t + N(0, σ²) with weight in (0.5, 1]. Outliers: p̂
    uniform over the satellite patch with weight in [0, outlier_weight_max).
    """
    rng = rng or trial_rng(cfg.seed)
    n = cfg.n_matches
    c = (cfg.grid_size - 1) / 2.0
    pose = gen_pose(cfg, (c, c), rng)

    src = rng.uniform(0.0, cfg.grid_size - 1, size=(n, 2))
    dst = pose.apply(src)
    if cfg.noise_sigma > 0:
        dst = dst + rng.normal(0.0, cfg.noise_sigma, size=(n, 2))
    weights = 1.0 - rng.uniform(0.0, 0.5, size=n)

    n_out = int(round(cfg.outlier_fraction * n))
    inliers = np.ones(n, dtype=bool)
    if n_out:
        idx = rng.permutation(n)[:n_out]
        inliers[idx] = False
        dst[idx] = rng.uniform(0.0, cfg.satellite_size - 1, size=(n_out, 2))
        weights[idx] = rng.uniform(0.0, cfg.outlier_weight_max, size=n_out)

    return SynthSample(pose=pose, matches=MatchSet(src, dst, weights), inliers=inliers)


def random_match_set(rng: np.random.Generator, n: int, extent: float = 10.0, noise_sigma: float = 0.5) -> MatchSet:
    """Noisy weighted matches near the origin under an arbitrary pose (gradient audits)."""
    theta = rng.uniform(-math.pi, math.pi)
    t = rng.uniform(-extent / 2, extent / 2, size=2)
    pose = Se2Pose(theta, t[0], t[1])
    src = rng.uniform(-extent, extent, size=(n, 2))
    dst = pose.apply(src) + rng.normal(0.0, noise_sigma, size=(n, 2))
    weights = 1.0 - rng.uniform(0.0, 0.5, size=n)
    return MatchSet(src, dst, weights)


# =========================
# Scenes
# =========================

def random_texture(rng: np.random.Generator, size: int, channels: int, sigma: float) -> FeatureMap:
    """Low-pass filtered white noise with unit-norm feature vectors per cell."""
    noise = rng.standard_normal((size, size, channels))
    if sigma > 0:
        noise = gaussian_filter(noise, sigma=(sigma, sigma, 0.0), mode="wrap")
    norm = np.linalg.norm(noise, axis=-1, keepdims=True)
    return FeatureMap(noise / np.maximum(norm, 1e-12))


def gen_scene(cfg: SynthConfig, grid: Optional[BevGrid] = None, rng: Optional[np.random.Generator] = None) -> SynthSample:
    """
    Satellite texture f_s and the BEV view f_bev(p') = f_s(R p' + t), with
    the pose rotating about the grid anchor and moving it within the prior
    around the satellite center.
    """
    grid = grid or cfg.grid()
    rng = rng or trial_rng(cfg.seed)
    sat = cfg.satellite_size
    if grid.size > sat:
        raise GeometryError(f"BEV grid {grid.size} px does not fit the {sat} px satellite patch")

    center = np.full(2, (sat - 1) / 2.0)
    reach = center + cfg.translation_px
    if np.any(center - cfg.translation_px < 0.0) or np.any(reach > sat - 1):
        raise GeometryError(f"translation prior ±{cfg.translation_px} px leaves the {sat} px satellite patch")

    anchor = grid.anchor_xy
    pose = gen_pose(cfg, tuple(anchor), rng, shift=tuple(center - anchor))
    f_s = random_texture(rng, sat, cfg.channels, cfg.smoothing_sigma)

    targets = pose.apply(grid.cells().reshape(-1, 2)).reshape(grid.size, grid.size, 2)
    f_bev, valid = bilinear_sample(f_s, CoordGrid(targets))
    log.debug("scene pose θ=%.4f t=(%.3f, %.3f), %d visible cells", pose.theta, pose.tu, pose.tv, int(valid.sum()))
    return SynthSample(pose=pose, f_s=f_s, f_bev=f_bev, visibility=valid)
