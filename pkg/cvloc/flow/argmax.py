from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np

from .base import FlowField
from .correlation import CorrelationPyramid
from ..core.exceptions import ShapeError

log = logging.getLogger(__name__)


# =========================
# Peak analysis
# =========================

def _parabola_offset(left: np.ndarray, center: np.ndarray, right: np.ndarray, ok: np.ndarray) -> np.ndarray:
    denom = left - 2.0 * center + right
    concave = ok & (denom < 0.0)
    safe = np.where(concave, denom, -1.0)
    offset = np.where(concave, 0.5 * (left - right) / safe, 0.0)
    return np.clip(offset, -0.5, 0.5)


def quadratic_peak_offset(patch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Least-squares fit of a + bx + cy + dx² + exy + gy² to N 3×3 patches
    (indexed [row, col], peak in the middle) and the vertex of each fit.

    Returns (offset, ok): offset is N×2 (dx, dy), ok marks fits with a
    negative-definite Hessian. Offsets of the other fits are 0.
    """
    left, mid, right = patch[:, :, 0].sum(axis=1), patch[:, :, 1].sum(axis=1), patch[:, :, 2].sum(axis=1)
    top, row, bottom = patch[:, 0, :].sum(axis=1), patch[:, 1, :].sum(axis=1), patch[:, 2, :].sum(axis=1)

    gx = (right - left) / 6.0
    gy = (bottom - top) / 6.0
    hxx = (left + right - 2.0 * mid) / 3.0
    hyy = (top + bottom - 2.0 * row) / 3.0
    hxy = (patch[:, 2, 2] - patch[:, 0, 2] - patch[:, 2, 0] + patch[:, 0, 0]) / 4.0

    det = hxx * hyy - hxy * hxy
    ok = (hxx < 0.0) & (det > 0.0)
    safe = np.where(ok, det, 1.0)
    dx = np.where(ok, (hxy * gy - hyy * gx) / safe, 0.0)
    dy = np.where(ok, (hxy * gx - hxx * gy) / safe, 0.0)
    return np.stack([dx, dy], axis=-1), ok


def correlation_peaks(pyr: CorrelationPyramid, temperature: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sub-pixel argmax target (x, y) and softmax peak mass for every source
    cell of level 0. Cached on the pyramid per temperature.
    """
    key = ("argmax", float(temperature))
    if key in pyr.cache:
        return pyr.cache[key]

    vol = pyr.levels[0]
    h1, w1, h2, w2 = vol.shape
    flat = vol.reshape(h1 * w1, h2 * w2)
    rows = np.arange(flat.shape[0])

    idx = np.argmax(flat, axis=1)
    ky, kx = np.divmod(idx, w2)
    peak = flat[rows, idx]

    grid = flat.reshape(-1, h2, w2)
    has_l = kx > 0
    has_r = kx < w2 - 1
    has_u = ky > 0
    has_d = ky < h2 - 1
    left = grid[rows, ky, np.maximum(kx - 1, 0)]
    right = grid[rows, ky, np.minimum(kx + 1, w2 - 1)]
    up = grid[rows, np.maximum(ky - 1, 0), kx]
    down = grid[rows, np.minimum(ky + 1, h2 - 1), kx]
    # separable parabolas cover border peaks and saddle-shaped neighbourhoods
    dx = _parabola_offset(left, peak, right, has_l & has_r)
    dy = _parabola_offset(up, peak, down, has_u & has_d)

    step = np.arange(-1, 2)
    patch = grid[
        rows[:, None, None],
        np.clip(ky[:, None, None] + step[None, :, None], 0, h2 - 1),
        np.clip(kx[:, None, None] + step[None, None, :], 0, w2 - 1),
    ]
    full, ok = quadratic_peak_offset(patch)
    ok &= has_l & has_r & has_u & has_d
    dx = np.where(ok, np.clip(full[:, 0], -0.5, 0.5), dx)
    dy = np.where(ok, np.clip(full[:, 1], -0.5, 0.5), dy)

    mass = np.exp((flat - peak[:, None]) / temperature).sum(axis=1)
    score = np.clip(1.0 / mass, 0.0, 1.0)

    targets = np.stack([kx + dx, ky + dy], axis=-1).reshape(h1, w1, 2)
    result = (targets, score.reshape(h1, w1))
    pyr.cache[key] = result
    log.debug("argmax peaks: mean score %.4g, sub-pixel |d| mean %.3f", score.mean(), np.abs(np.stack([dx, dy])).mean())
    return result


def argmax_update(pyr: CorrelationPyramid, flow: FlowField, temperature: float = 1.0) -> FlowField:
    """
    Weight-free baseline operator: jump every visible cell to its global
    correlation peak; invisible cells keep their flow and score.
    """
    if tuple(pyr.source_shape) != flow.shape:
        raise ShapeError(f"pyramid source {pyr.source_shape} does not match flow {flow.shape}")
    if temperature <= 0:
        raise ShapeError(f"temperature must be > 0, got {temperature}")

    targets, score = correlation_peaks(pyr, temperature)
    rows, cols = np.meshgrid(np.arange(flow.height), np.arange(flow.width), indexing="ij")
    peak_flow = targets - np.stack([cols, rows], axis=-1)

    vis = flow.visibility.astype(bool)
    new_flow = np.where(vis[..., None], peak_flow, flow.flow)
    new_score = np.where(vis, score, flow.score)
    return FlowField(flow=new_flow, score=new_score, visibility=flow.visibility)


# =========================
# Operator
# =========================

@dataclass
class ArgmaxParams:
    temperature: float = 1.0


class ArgmaxOperator:
    name = "argmax"

    def __init__(self, params: ArgmaxParams | None = None):
        self.p = params or ArgmaxParams()

    def start(self, pyr: CorrelationPyramid, flow: FlowField) -> Any:
        return None

    def update(self, pyr: CorrelationPyramid, flow: FlowField, state: Any) -> Tuple[FlowField, Any]:
        return argmax_update(pyr, flow, self.p.temperature), state
