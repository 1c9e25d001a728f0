from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from ..core.exceptions import GeometryError, ShapeError
from .feature_map import CoordGrid, FeatureMap

log = logging.getLogger(__name__)


# =========================
# Elementwise
# =========================

def relu(fm: FeatureMap) -> FeatureMap:
    return FeatureMap(np.maximum(fm.data, 0.0))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def concat_channels(*maps: FeatureMap | None) -> FeatureMap:
    arrays = [m.data for m in maps if m is not None]
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"cannot concatenate maps of spatial shapes {sorted(shapes)}")
    return FeatureMap(np.concatenate(arrays, axis=2))


# =========================
# Convolution
# =========================

def conv2d(
    fm: FeatureMap,
    kernel: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    bias: np.ndarray | None = None,
) -> FeatureMap:
    """
    Zero-padded cross-correlation with a K×K×Cin×Cout kernel.

    Taps are accumulated in a fixed (row, col) order and each tap contracts
    over channels, so repeated calls are bit-identical.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"kernel must be K×K×Cin×Cout, got shape {kernel.shape}")
    k, _, cin, cout = kernel.shape
    if cin != fm.channels:
        raise ShapeError(f"kernel expects {cin} input channels, feature map has {fm.channels}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")

    out_h = (fm.height + 2 * padding - k) // stride + 1
    out_w = (fm.width + 2 * padding - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise GeometryError(
            f"convolution output would be {out_h}×{out_w} for input {fm.height}×{fm.width}, "
            f"K={k}, stride={stride}, padding={padding}"
        )

    x = np.pad(fm.data, ((padding, padding), (padding, padding), (0, 0)))
    out = np.zeros((out_h, out_w, cout))
    span_h = (out_h - 1) * stride + 1
    span_w = (out_w - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            window = x[i : i + span_h : stride, j : j + span_w : stride, :]
            out += window @ kernel[i, j]

    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (cout,):
            raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
        out += bias
    return FeatureMap(out)


# =========================
# Pooling
# =========================

def pool2x2(array: np.ndarray, axes: tuple[int, int] = (0, 1)) -> np.ndarray:
    """
    2×2 block mean over two axes of any array.

    Odd extents are padded on the bottom/right by replicating the last slice.
    The four block members are summed in a fixed order.
    """
    a = np.moveaxis(np.asarray(array, dtype=np.float64), axes, (0, 1))
    pad = [(0, a.shape[0] % 2), (0, a.shape[1] % 2)] + [(0, 0)] * (a.ndim - 2)
    if pad[0][1] or pad[1][1]:
        a = np.pad(a, pad, mode="edge")
    pooled = (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) * 0.25
    return np.moveaxis(pooled, (0, 1), axes)


def avg_pool2x2(fm: FeatureMap) -> FeatureMap:
    return FeatureMap(pool2x2(fm.data, axes=(0, 1)))


# =========================
# Bilinear sampling
# =========================

class BilinearTaps(NamedTuple):
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    valid: np.ndarray


def bilinear_taps(x: np.ndarray, y: np.ndarray, height: int, width: int) -> BilinearTaps:
    """
    Neighbor indices and weights under the pixel-center convention.

    A coordinate is valid iff it lies in [0, W-1]×[0, H-1]; on the far edge the
    lower neighbor is pulled in by one so the upper weight becomes exactly 1.
    Invalid entries get index 0 and weight 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        valid = (x >= 0.0) & (x <= width - 1) & (y >= 0.0) & (y <= height - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)

    x0 = np.minimum(np.floor(xs).astype(np.int64), max(width - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = xs - x0
    wy = ys - y0
    return BilinearTaps(x0, x1, y0, y1, wx, wy, valid)


def _blend(v00, v01, v10, v11, wx, wy):
    top = (1.0 - wx) * v00 + wx * v01
    bottom = (1.0 - wx) * v10 + wx * v11
    return (1.0 - wy) * top + wy * bottom


def bilinear_sample(fm: FeatureMap, grid: CoordGrid) -> tuple[FeatureMap, np.ndarray]:
    """
    Sample `fm` at every grid coordinate. Returns the sampled map and a
    {0, 1} validity mask; invalid cells hold 0.
    """
    taps = bilinear_taps(grid.x, grid.y, fm.height, fm.width)
    d = fm.data
    wx = taps.wx[..., None]
    wy = taps.wy[..., None]
    out = _blend(
        d[taps.y0, taps.x0], d[taps.y0, taps.x1],
        d[taps.y1, taps.x0], d[taps.y1, taps.x1],
        wx, wy,
    )
    out = np.where(taps.valid[..., None], out, 0.0)
    return FeatureMap(out), taps.valid.astype(np.uint8)


def bilinear_gather(images: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-image sampling: images is N×H×W, x/y are N×D coordinates into image n.
    Returns N×D values (0 where invalid) and the validity mask.
    """
    n, height, width = images.shape
    taps = bilinear_taps(x, y, height, width)
    idx = np.arange(n)[:, None]
    out = _blend(
        images[idx, taps.y0, taps.x0], images[idx, taps.y0, taps.x1],
        images[idx, taps.y1, taps.x0], images[idx, taps.y1, taps.x1],
        taps.wx, taps.wy,
    )
    return np.where(taps.valid, out, 0.0), taps.valid
