"""
All-pairs correlation between the refined BEV features and the satellite
features, its 2×2-pooled pyramid, and windowed lookup around match estimates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..core.exceptions import ShapeError
from ..tensor.feature_map import CoordGrid, FeatureMap
from ..tensor.ops import bilinear_gather, pool2x2

log = logging.getLogger(__name__)

DEFAULT_LEVELS = 4
DEFAULT_RADIUS = 4


@dataclass
class CorrelationPyramid:
    levels: List[np.ndarray]          # level k: H1×W1×(H2/2^k)×(W2/2^k)
    source_shape: Tuple[int, int]
    normalization: float
    cache: Dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def target_shape(self) -> Tuple[int, int]:
        return self.levels[0].shape[2:]


def build_correlation(f1: FeatureMap, f2: FeatureMap) -> CorrelationPyramid:
    """
    vol[i, j, k, l] = <f1[i, j], f2[k, l]> / sqrt(C).

    Channels are accumulated one at a time in index order, so swapping the
    arguments yields the exactly transposed volume.
    """
    if f1.channels != f2.channels:
        raise ShapeError(f"correlation needs equal channels, got {f1.channels} and {f2.channels}")
    c = f1.channels
    vol = np.zeros((f1.height, f1.width, f2.height, f2.width))
    for ch in range(c):
        vol += f1.data[:, :, ch, None, None] * f2.data[None, None, :, :, ch]
    norm = math.sqrt(c)
    vol /= norm
    log.debug("correlation volume %s (normalization %.4f)", vol.shape, norm)
    return CorrelationPyramid(levels=[vol], source_shape=(f1.height, f1.width), normalization=norm)


def build_pyramid(level0: CorrelationPyramid, num_levels: int = DEFAULT_LEVELS) -> CorrelationPyramid:
    if num_levels < 1:
        raise ShapeError(f"num_levels must be >= 1, got {num_levels}")
    levels = [level0.levels[0]]
    for _ in range(num_levels - 1):
        levels.append(pool2x2(levels[-1], axes=(2, 3)))
    return CorrelationPyramid(levels=levels, source_shape=level0.source_shape, normalization=level0.normalization)


def lookup_channels(num_levels: int, radius: int) -> int:
    return num_levels * (2 * radius + 1) ** 2


def lookup(pyr: CorrelationPyramid, coords: CoordGrid, radius: int = DEFAULT_RADIUS) -> FeatureMap:
    """
    Sample a (2r+1)² window of every level around coords / 2^k.

    Channels are ordered by level, then row offset, then column offset.
    Samples whose bilinear footprint leaves the level are 0.
    """
    h1, w1 = pyr.source_shape
    if (coords.height, coords.width) != (h1, w1):
        raise ShapeError(f"lookup coords {coords.height}×{coords.width} do not match source {h1}×{w1}")
    if radius < 0:
        raise ShapeError(f"radius must be >= 0, got {radius}")

    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    dy, dx = np.meshgrid(offsets, offsets, indexing="ij")
    dx = dx.reshape(1, -1)
    dy = dy.reshape(1, -1)
    base_x = coords.x.reshape(-1, 1)
    base_y = coords.y.reshape(-1, 1)

    out = []
    for k, vol in enumerate(pyr.levels):
        scale = 2.0 ** k
        images = vol.reshape(h1 * w1, vol.shape[2], vol.shape[3])
        values, _ = bilinear_gather(images, base_x / scale + dx, base_y / scale + dy)
        out.append(values)
    return FeatureMap(np.concatenate(out, axis=1).reshape(h1, w1, -1))
