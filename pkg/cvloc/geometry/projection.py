"""
Ground-plane projection: every BEV cell is lifted to its world point on the
plane at height h and pushed through K·(R, t) into the ground image, then the
ground feature map is sampled there (inverse warping, hole-free).
"""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from .camera import BevGrid, CameraModel
from ..core.exceptions import ShapeError
from ..tensor.feature_map import CoordGrid, FeatureMap
from ..tensor.ops import bilinear_sample

log = logging.getLogger(__name__)

DEFAULT_FEATURE_STRIDE = 8
MIN_HOMOGENEOUS = 1e-12


def ground_to_bev_lookup(camera: CameraModel, grid: BevGrid) -> Tuple[CoordGrid, np.ndarray]:
    """
    Ground-image pixel (u, v) for every BEV cell, plus visibility.

    Cells at non-positive depth get NaN coordinates; cells projecting outside
    [0, W-1]×[0, H-1] keep their coordinates but are marked invisible.
    """
    xw = grid.ground_points().reshape(-1, 3)
    xc = xw @ camera.R.T + camera.t
    uvw = xc @ camera.K.T

    w = uvw[:, 2]
    ahead = (xc[:, 2] > 0.0) & (np.abs(w) >= MIN_HOMOGENEOUS)
    safe_w = np.where(ahead, w, 1.0)
    u = np.where(ahead, uvw[:, 0] / safe_w, np.nan)
    v = np.where(ahead, uvw[:, 1] / safe_w, np.nan)

    with np.errstate(invalid="ignore"):
        inside = (u >= 0.0) & (u <= camera.image_w - 1) & (v >= 0.0) & (v <= camera.image_h - 1)
    vis = (ahead & inside).reshape(grid.shape).astype(np.uint8)
    coords = CoordGrid.from_xy(u.reshape(grid.shape), v.reshape(grid.shape))

    if vis.mean() < 0.1:
        log.warning("only %.1f%% of BEV cells are visible from the camera", 100.0 * vis.mean())
    return coords, vis


def image_to_feature_coords(coords: CoordGrid, stride: int) -> CoordGrid:
    """Pixel-center mapping from image pixels to a stride-s feature lattice."""
    return CoordGrid((coords.coords + 0.5) / stride - 0.5)


def _check_stride(f_g: FeatureMap, camera: CameraModel, stride: int) -> None:
    if stride < 1:
        raise ShapeError(f"feature stride must be >= 1, got {stride}")
    ok_h = f_g.height in (camera.image_h // stride, -(-camera.image_h // stride))
    ok_w = f_g.width in (camera.image_w // stride, -(-camera.image_w // stride))
    if not (ok_h and ok_w):
        raise ShapeError(
            f"ground features {f_g.height}×{f_g.width} do not match image "
            f"{camera.image_h}×{camera.image_w} at stride {stride}"
        )


def project_ground_features(
    f_g: FeatureMap,
    camera: CameraModel,
    grid: BevGrid,
    stride: int = DEFAULT_FEATURE_STRIDE,
) -> Tuple[FeatureMap, np.ndarray]:
    _check_stride(f_g, camera, stride)
    coords, vis = ground_to_bev_lookup(camera, grid)
    sampled, valid = bilinear_sample(f_g, image_to_feature_coords(coords, stride))
    visibility = (vis & valid).astype(np.uint8)
    bev = FeatureMap(np.where(visibility[..., None] == 1, sampled.data, 0.0))
    log.debug("projected %d/%d BEV cells", int(visibility.sum()), visibility.size)
    return bev, visibility
