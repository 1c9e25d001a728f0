from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.exceptions import DataError, ShapeError
from ..flow.base import FlowField

CSV_HEADER = ["px", "py", "qx", "qy", "s"]


@dataclass(frozen=True)
class MatchSet:
    """Weighted correspondences p'_i (BEV px) ↔ p̂_i (satellite px) with S_i >= 0."""

    p_src: np.ndarray
    p_dst: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.p_src, dtype=np.float64).reshape(-1, 2)
        dst = np.asarray(self.p_dst, dtype=np.float64).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (len(src) == len(dst) == len(w)):
            raise ShapeError(f"match arrays differ in length: {len(src)}, {len(dst)}, {len(w)}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ShapeError("match weights must be finite and non-negative")
        active = w > 0.0
        if not (np.all(np.isfinite(src[active])) and np.all(np.isfinite(dst[active]))):
            raise ShapeError("weighted matches must have finite coordinates")
        for arr in (src, dst, w):
            arr.setflags(write=False)
        object.__setattr__(self, "p_src", src)
        object.__setattr__(self, "p_dst", dst)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return len(self.weights)

    def with_weights(self, weights: np.ndarray) -> "MatchSet":
        return MatchSet(self.p_src, self.p_dst, weights)

    def subset(self, mask: np.ndarray) -> "MatchSet":
        return MatchSet(self.p_src[mask], self.p_dst[mask], self.weights[mask])


def flow_to_matches(flow: FlowField, grid=None) -> MatchSet:
    """
    One match per cell in row-major order: p' = (col, row), p̂ = p' + flow,
    S = visibility · score.
    """
    if grid is not None and tuple(grid.shape) != flow.shape:
        raise ShapeError(f"flow {flow.shape} does not cover the {grid.size}×{grid.size} grid")
    rows, cols = np.meshgrid(np.arange(flow.height, dtype=np.float64), np.arange(flow.width, dtype=np.float64), indexing="ij")
    src = np.stack([cols, rows], axis=-1).reshape(-1, 2)
    vis = flow.visibility.reshape(-1).astype(bool)
    dst = src + np.where(vis[:, None], flow.flow.reshape(-1, 2), 0.0)
    weights = np.where(vis, flow.score.reshape(-1), 0.0)
    return MatchSet(src, dst, weights)


# =========================
# CSV
# =========================

def save_matches_csv(m: MatchSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for (px, py), (qx, qy), s in zip(m.p_src, m.p_dst, m.weights):
            writer.writerow([repr(float(v)) for v in (px, py, qx, qy, s)])


def load_matches_csv(path: str | Path) -> MatchSet:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}: line {line_no}: expected 5 fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise DataError(f"{path}: line {line_no}: {e}") from e
    arr = np.array(rows, dtype=np.float64).reshape(-1, 5)
    try:
        return MatchSet(arr[:, 0:2], arr[:, 2:4], arr[:, 4])
    except ShapeError as e:
        raise DataError(f"{path}: {e}") from e
