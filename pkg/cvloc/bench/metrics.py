"""
Localization error decomposition and recall tables.

Position errors are split along the ground-truth heading (longitudinal) and
across it (lateral). Recalls count errors strictly below each threshold.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from rich.table import Table

from ..core.exceptions import DataError
from ..geometry.camera import BevGrid
from ..geometry.se2 import Se2Pose, wrap_angle
from ..solver.procrustes import LocalizationResult

log = logging.getLogger(__name__)

POSE_CSV_HEADER = ["id", "theta_rad", "tu_px", "tv_px"]


class Thresholds(BaseModel):
    location: Tuple[float, ...] = (1.0, 5.0)
    lateral: Tuple[float, ...] = (1.0, 5.0)
    longitudinal: Tuple[float, ...] = (1.0, 5.0)
    azimuth_deg: Tuple[float, ...] = Field(default=(1.0, 5.0))


@dataclass(frozen=True)
class ErrorRecord:
    sample_id: str
    location: float
    lateral: float
    longitudinal: float
    azimuth_deg: float


def camera_heading(pose_gt: Se2Pose) -> float:
    """Direction of the camera's forward axis (BEV up, (0, -1)) after the GT rotation, from +x."""
    return pose_gt.theta - math.pi / 2.0


def localization_errors(
    pred: Union[LocalizationResult, Se2Pose],
    gt: Se2Pose,
    grid: Optional[BevGrid] = None,
    mpp: float = 1.0,
    heading_rad: Optional[float] = None,
    sample_id: str = "",
) -> ErrorRecord:
    if mpp <= 0:
        raise DataError(f"meters_per_pixel must be > 0, got {mpp}")
    pose = pred.pose if isinstance(pred, LocalizationResult) else pred
    anchor = grid.anchor_xy if grid is not None else np.zeros(2)

    err = ((pose.R @ anchor + pose.t) - (gt.R @ anchor + gt.t)) * mpp
    heading = camera_heading(gt) if heading_rad is None else heading_rad
    hx, hy = math.cos(heading), math.sin(heading)

    return ErrorRecord(
        sample_id=sample_id,
        location=math.hypot(err[0], err[1]),
        lateral=abs(err[1] * hx - err[0] * hy),
        longitudinal=abs(err[0] * hx + err[1] * hy),
        azimuth_deg=math.degrees(abs(wrap_angle(pose.theta - gt.theta))),
    )


# =========================
# Aggregation
# =========================

def recall(values: np.ndarray, threshold: float, total: Optional[int] = None) -> float:
    """Percent of `total` samples (default: all values) strictly under the threshold."""
    return 100.0 * float(np.count_nonzero(values < threshold)) / (len(values) if total is None else total)


@dataclass
class MetricsTable:
    count: int
    unit: str
    mean_location: float
    median_location: float
    mean_azimuth_deg: float
    median_azimuth_deg: float
    recall_location: Dict[float, float] = field(default_factory=dict)
    recall_lateral: Dict[float, float] = field(default_factory=dict)
    recall_longitudinal: Dict[float, float] = field(default_factory=dict)
    recall_azimuth: Dict[float, float] = field(default_factory=dict)
    # samples with no pose at all; they count as misses in every recall
    misses: int = 0

    def to_json(self) -> dict:
        def keyed(d: Dict[float, float]) -> Dict[str, float]:
            return {f"{k:g}": v for k, v in sorted(d.items())}

        return {
            "count": self.count,
            "misses": self.misses,
            "unit": self.unit,
            "mean_location": self.mean_location,
            "median_location": self.median_location,
            "mean_azimuth_deg": self.mean_azimuth_deg,
            "median_azimuth_deg": self.median_azimuth_deg,
            "recall_location": keyed(self.recall_location),
            "recall_lateral": keyed(self.recall_lateral),
            "recall_longitudinal": keyed(self.recall_longitudinal),
            "recall_azimuth": keyed(self.recall_azimuth),
        }

    def render(self, title: str = "Localization") -> Table:
        u = self.unit
        suffix = f", {self.misses} unsolved" if self.misses else ""
        table = Table(title=f"{title} ({self.count} samples{suffix})")
        table.add_column("Location mean", justify="right")
        table.add_column("Location median", justify="right")
        for k in sorted(self.recall_location):
            table.add_column(f"Loc r@{k:g}{u}", justify="right")
        for k in sorted(self.recall_lateral):
            table.add_column(f"Lat r@{k:g}{u}", justify="right")
        for k in sorted(self.recall_longitudinal):
            table.add_column(f"Lon r@{k:g}{u}", justify="right")
        table.add_column("Az mean", justify="right")
        table.add_column("Az median", justify="right")
        for k in sorted(self.recall_azimuth):
            table.add_column(f"Az r@{k:g}°", justify="right")

        row = [f"{self.mean_location:.2f}", f"{self.median_location:.2f}"]
        for d in (self.recall_location, self.recall_lateral, self.recall_longitudinal):
            row += [f"{d[k]:.2f}" for k in sorted(d)]
        row += [f"{self.mean_azimuth_deg:.2f}", f"{self.median_azimuth_deg:.2f}"]
        row += [f"{self.recall_azimuth[k]:.2f}" for k in sorted(self.recall_azimuth)]
        table.add_row(*row)
        return table


def aggregate(
    records: Sequence[ErrorRecord],
    thresholds: Optional[Thresholds] = None,
    unit: str = "m",
    misses: int = 0,
) -> MetricsTable:
    """
    Means, medians and strict-< recalls. Means and medians cover the solved
    records; recalls are taken over records plus `misses`.
    """
    if not records:
        raise DataError("cannot aggregate an empty set of error records")
    if misses < 0:
        raise DataError(f"misses must be >= 0, got {misses}")
    total = len(records) + misses
    th = thresholds or Thresholds()

    loc = np.array([r.location for r in records])
    lat = np.array([r.lateral for r in records])
    lon = np.array([r.longitudinal for r in records])
    az = np.array([r.azimuth_deg for r in records])

    # sorted copies keep sums independent of record order
    return MetricsTable(
        count=len(records),
        unit=unit,
        mean_location=math.fsum(np.sort(loc).tolist()) / len(loc),
        median_location=float(np.median(loc)),
        mean_azimuth_deg=math.fsum(np.sort(az).tolist()) / len(az),
        median_azimuth_deg=float(np.median(az)),
        recall_location={t: recall(loc, t, total) for t in th.location},
        recall_lateral={t: recall(lat, t, total) for t in th.lateral},
        recall_longitudinal={t: recall(lon, t, total) for t in th.longitudinal},
        recall_azimuth={t: recall(az, t, total) for t in th.azimuth_deg},
        misses=misses,
    )


# =========================
# Pose list CSV
# =========================

def save_pose_csv(poses: Dict[str, Se2Pose], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(POSE_CSV_HEADER)
        for sid, p in poses.items():
            writer.writerow([sid, repr(p.theta), repr(p.tu), repr(p.tv)])


def load_pose_csv(path: str | Path) -> Dict[str, Se2Pose]:
    poses: Dict[str, Se2Pose] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POSE_CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(POSE_CSV_HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(POSE_CSV_HEADER):
                raise DataError(f"{path}: line {line_no}: expected 4 fields, got {len(row)}")
            sid = row[0].strip()
            if sid in poses:
                raise DataError(f"{path}: line {line_no}: duplicate id {sid!r}")
            try:
                poses[sid] = Se2Pose(*(float(v) for v in row[1:]))
            except ValueError as e:
                raise DataError(f"{path}: line {line_no}: {e}") from e
    return poses


def evaluate_pose_lists(
    pred: Dict[str, Se2Pose],
    gt: Dict[str, Se2Pose],
    grid: Optional[BevGrid] = None,
    mpp: float = 1.0,
) -> List[ErrorRecord]:
    missing = [sid for sid in gt if sid not in pred]
    if missing:
        raise DataError(f"predictions missing for {len(missing)} ids, first {missing[0]!r}")
    extra = [sid for sid in pred if sid not in gt]
    if extra:
        log.warning("ignoring %d predictions without ground truth", len(extra))
    return [localization_errors(pred[sid], gt[sid], grid, mpp, sample_id=sid) for sid in gt]

