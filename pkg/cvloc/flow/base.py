from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List, Protocol, Tuple

import numpy as np

from ..core.exceptions import ShapeError


@dataclass(frozen=True)
class FlowField:
    """
    Per-cell displacement from a BEV cell p' to its satellite match
    p̂ = p' + flow(p'), with a confidence score in [0, 1] and visibility.
    """

    flow: np.ndarray        # H×W×2, (fx, fy) in px
    score: np.ndarray       # H×W
    visibility: np.ndarray  # H×W, {0, 1}

    def __post_init__(self):
        flow = np.asarray(self.flow, dtype=np.float64)
        score = np.asarray(self.score, dtype=np.float64)
        vis = np.asarray(self.visibility).astype(np.uint8)
        if flow.ndim != 3 or flow.shape[2] != 2:
            raise ShapeError(f"flow must be H×W×2, got {flow.shape}")
        if score.shape != flow.shape[:2] or vis.shape != flow.shape[:2]:
            raise ShapeError(f"flow {flow.shape[:2]}, score {score.shape} and visibility {vis.shape} must be congruent")
        if np.any(vis > 1):
            raise ShapeError("visibility must be 0 or 1")
        if np.any((score < 0.0) | (score > 1.0)) or np.any(np.isnan(score)):
            raise ShapeError("scores must lie in [0, 1]")
        if not np.all(np.isfinite(flow[vis == 1])):
            raise ShapeError("flow must be finite on visible cells")
        for arr in (flow, score, vis):
            arr.setflags(write=False)
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "visibility", vis)

    @property
    def height(self) -> int:
        return self.flow.shape[0]

    @property
    def width(self) -> int:
        return self.flow.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.flow.shape[:2]

    def targets(self) -> np.ndarray:
        """Match endpoints p' + flow, H×W×2 as (x, y)."""
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return np.stack([cols + self.flow[..., 0], rows + self.flow[..., 1]], axis=-1)


@dataclass(frozen=True)
class FlowTrace:
    iterations: List[FlowField]

    def __post_init__(self):
        if not self.iterations:
            raise ShapeError("flow trace must hold at least one iterate")
        shapes = {f.shape for f in self.iterations}
        if len(shapes) != 1:
            raise ShapeError(f"trace iterates have differing shapes {sorted(shapes)}")

    @property
    def final(self) -> FlowField:
        return self.iterations[-1]

    def __len__(self) -> int:
        return len(self.iterations)


def init_flow(shape: Tuple[int, int], visibility: np.ndarray | None = None) -> FlowField:
    """Zero flow (identity matching), score 0.5."""
    h, w = shape
    vis = np.ones((h, w), dtype=np.uint8) if visibility is None else np.asarray(visibility)
    if vis.shape != (h, w):
        raise ShapeError(f"visibility shape {vis.shape} does not match grid {(h, w)}")
    return FlowField(flow=np.zeros((h, w, 2)), score=np.full((h, w), 0.5), visibility=vis)


class UpdateOperator(Protocol):
    """One step of iterative match refinement against a correlation pyramid."""

    name: str

    def start(self, pyr, flow: FlowField) -> Any:
        ...

    def update(self, pyr, flow: FlowField, state: Any) -> Tuple[FlowField, Any]:
        ...
