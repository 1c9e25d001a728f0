"""
Ground-truth flow from poses and the three-part training objective

    L = β·L_p + Σ_l (L_m^l + α·L_c^l)

evaluated as plain values (no optimizer). Losses are sums over cells.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import expit

from .core.exceptions import DataError, DegenerateInputError, ShapeError
from .flow.base import FlowField, FlowTrace
from .geometry.camera import BevGrid
from .geometry.se2 import Se2Pose, wrap_angle

log = logging.getLogger(__name__)

STD_EPS = 1e-8


# =========================
# Ground truth
# =========================

def gt_flow(
    pose_gt: Se2Pose,
    grid: Union[BevGrid, Tuple[int, int]],
    visibility: Optional[np.ndarray] = None,
    sat_shape: Optional[Tuple[int, int]] = None,
) -> FlowField:
    """
    flow(p') = R p' + t − p' with score 1 on visible cells. With `sat_shape`
    given, cells whose target leaves [0, W-1]×[0, H-1] become invisible.
    """
    h, w = grid.shape if isinstance(grid, BevGrid) else grid
    vis = np.ones((h, w), dtype=np.uint8) if visibility is None else np.asarray(visibility).astype(np.uint8)
    if vis.shape != (h, w):
        raise ShapeError(f"visibility {vis.shape} does not match grid {(h, w)}")

    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src = np.stack([cols, rows], axis=-1)
    dst = src @ pose_gt.R.T + pose_gt.t

    if sat_shape is not None:
        sh, sw = sat_shape
        inside = (dst[..., 0] >= 0.0) & (dst[..., 0] <= sw - 1) & (dst[..., 1] >= 0.0) & (dst[..., 1] <= sh - 1)
        vis = vis & inside.astype(np.uint8)

    flow = np.where(vis[..., None] == 1, dst - src, 0.0)
    score = vis.astype(np.float64)
    return FlowField(flow=flow, score=score, visibility=vis)


# =========================
# Loss terms
# =========================

def flow_errors(pred: FlowField, gt: FlowField) -> Tuple[np.ndarray, np.ndarray]:
    """Per-cell L1 flow error and the jointly visible mask."""
    if pred.shape != gt.shape:
        raise ShapeError(f"predicted flow {pred.shape} and ground truth {gt.shape} differ")
    joint = (pred.visibility == 1) & (gt.visibility == 1)
    diff = np.abs(np.where(joint[..., None], gt.flow - pred.flow, 0.0))
    return diff[..., 0] + diff[..., 1], joint


def matching_loss(pred: FlowField, gt: FlowField) -> float:
    d, joint = flow_errors(pred, gt)
    return math.fsum(d[joint].tolist())


def confidence_loss(
    scores: np.ndarray,
    distances: np.ndarray,
    kappa: float,
    visibility: Optional[np.ndarray] = None,
) -> float:
    """
    Σ S σ(d̃/κ) + (1 − S) σ(−d̃/κ) over visible cells, with d̃ the distances
    standardized by their mean and population std (floored at 1e-8).
    """
    if kappa <= 0:
        raise DataError(f"kappa must be > 0, got {kappa}")
    s = np.asarray(scores, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    if s.shape != d.shape:
        raise ShapeError(f"scores {s.shape} and distances {d.shape} differ")
    mask = np.ones(s.shape, dtype=bool) if visibility is None else np.asarray(visibility).astype(bool)
    s, d = s[mask], d[mask]
    if d.size < 2:
        raise DegenerateInputError(f"confidence loss needs at least 2 visible cells, got {d.size}")

    if d.max() == d.min():
        z = np.zeros_like(d)
    else:
        z = (d - d.mean()) / max(float(d.std()), STD_EPS)
    up, down = expit(z / kappa), expit(-z / kappa)
    return math.fsum((down + s * (up - down)).tolist())


def position_loss(pred: Se2Pose, gt: Se2Pose) -> float:
    return abs(wrap_angle(gt.theta - pred.theta)) + abs(gt.tu - pred.tu) + abs(gt.tv - pred.tv)


# =========================
# Schedule / total
# =========================

class TrainSchedule(BaseModel):
    alpha: float = Field(100.0, gt=0)
    kappa_initial: float = Field(200.0, gt=0)
    kappa_final: float = Field(20.0, gt=0)
    beta_initial: float = Field(1.0, gt=0)
    beta_final: float = Field(10.0, gt=0)
    switch_epoch: int = Field(15, ge=0)

    def kappa(self, epoch: int) -> float:
        return self.kappa_final if epoch >= self.switch_epoch else self.kappa_initial

    def beta(self, epoch: int) -> float:
        return self.beta_final if epoch >= self.switch_epoch else self.beta_initial


@dataclass
class LossReport:
    matching: List[float] = field(default_factory=list)
    confidence: List[float] = field(default_factory=list)
    position: float = 0.0
    total: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    kappa: float = 0.0
    epoch: int = 0

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "kappa": self.kappa,
            "epoch": self.epoch,
            "iterations": [{"matching": m, "confidence": c} for m, c in zip(self.matching, self.confidence)],
            "position": self.position,
            "total": self.total,
        }


def total_loss(
    trace: FlowTrace,
    gt: FlowField,
    pose_pred: Se2Pose,
    pose_gt: Se2Pose,
    sched: Optional[TrainSchedule] = None,
    epoch: int = 0,
) -> LossReport:
    sched = sched or TrainSchedule()
    kappa, beta, alpha = sched.kappa(epoch), sched.beta(epoch), sched.alpha

    report = LossReport(alpha=alpha, beta=beta, kappa=kappa, epoch=epoch)
    for it, pred in enumerate(trace.iterations):
        d, joint = flow_errors(pred, gt)
        report.matching.append(math.fsum(d[joint].tolist()))
        report.confidence.append(confidence_loss(pred.score, d, kappa, joint))
        log.debug("iter %d: L_m %.6g L_c %.6g", it + 1, report.matching[-1], report.confidence[-1])

    report.position = position_loss(pose_pred, pose_gt)
    report.total = beta * report.position + math.fsum(report.matching) + alpha * math.fsum(report.confidence)
    return report
