"""
RefineBlock forward pass: 7×7 conv, 3×3 residual block, 1×1 conv, all with
same-padding so the refined map stays aligned with the BEV grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core.exceptions import ShapeError
from .tensor import formats
from .tensor.feature_map import FeatureMap
from .tensor.io import WeightStore
from .tensor.ops import conv2d, relu

log = logging.getLogger(__name__)

_LAYERS = (
    ("conv7", formats.REFINE_CONV7, 7),
    ("res3_a", formats.REFINE_RES3A, 3),
    ("res3_b", formats.REFINE_RES3B, 3),
    ("conv1", formats.REFINE_CONV1, 1),
)


@dataclass(frozen=True)
class RefineWeights:
    conv7: np.ndarray
    conv7_b: Optional[np.ndarray]
    res3_a: np.ndarray
    res3_a_b: Optional[np.ndarray]
    res3_b: np.ndarray
    res3_b_b: Optional[np.ndarray]
    conv1: np.ndarray
    conv1_b: Optional[np.ndarray]

    def __post_init__(self):
        c = self.channels
        for attr, _, k in _LAYERS:
            w = getattr(self, attr)
            if w.shape != (k, k, c, c):
                raise ShapeError(f"refine {attr} kernel must be {(k, k, c, c)}, got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ShapeError(f"refine {attr} kernel has non-finite values")
            b = getattr(self, f"{attr}_b")
            if b is not None and (b.shape != (c,) or not np.all(np.isfinite(b))):
                raise ShapeError(f"refine {attr} bias must be {c} finite values, got shape {b.shape}")

    @property
    def channels(self) -> int:
        return self.conv7.shape[2]

    @classmethod
    def from_store(cls, store: WeightStore) -> "RefineWeights":
        shape = store.shape_of(f"{formats.REFINE_CONV7}.w")
        if len(shape) != 4:
            raise ShapeError(f"{formats.REFINE_CONV7}.w must be rank 4, got {shape}")
        c = shape[2]
        kw = {}
        for attr, name, k in _LAYERS:
            kw[attr] = store.get(f"{name}.w", (k, k, c, c))
            kw[f"{attr}_b"] = store.get(f"{name}.b", (c,)) if store.has(f"{name}.b") else None
        return cls(**kw)

    def to_store(self) -> WeightStore:
        store = WeightStore()
        for attr, name, _ in _LAYERS:
            store.put(f"{name}.w", getattr(self, attr))
            b = getattr(self, f"{attr}_b")
            if b is not None:
                store.put(f"{name}.b", b)
        return store

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, scale: float = 0.05) -> "RefineWeights":
        kw = {}
        for attr, _, k in _LAYERS:
            kw[attr] = rng.normal(0.0, scale, (k, k, channels, channels))
            kw[f"{attr}_b"] = rng.normal(0.0, scale, channels)
        return cls(**kw)


def refine_block(f_bev: FeatureMap, w: RefineWeights) -> FeatureMap:
    if f_bev.channels != w.channels:
        raise ShapeError(f"RefineBlock expects {w.channels} channels, got {f_bev.channels}")
    y1 = relu(conv2d(f_bev, w.conv7, padding=3, bias=w.conv7_b))
    branch = conv2d(relu(conv2d(y1, w.res3_a, padding=1, bias=w.res3_a_b)), w.res3_b, padding=1, bias=w.res3_b_b)
    y2 = FeatureMap(y1.data + branch.data)
    out = conv2d(relu(y2), w.conv1, padding=0, bias=w.conv1_b)
    log.debug("refined BEV map %s", out.shape)
    return out
