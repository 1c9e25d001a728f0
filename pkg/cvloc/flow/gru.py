from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .base import FlowField
from .correlation import DEFAULT_RADIUS, CorrelationPyramid, lookup, lookup_channels
from ..core.exceptions import ShapeError
from ..tensor import formats
from ..tensor.feature_map import CoordGrid, FeatureMap
from ..tensor.io import WeightStore
from ..tensor.ops import concat_channels, conv2d, sigmoid

log = logging.getLogger(__name__)


# =========================
# Weights
# =========================

@dataclass(frozen=True)
class ConvLayer:
    name: str
    w: np.ndarray
    b: np.ndarray

    @property
    def kernel(self) -> int:
        return self.w.shape[0]

    def __call__(self, fm: FeatureMap) -> FeatureMap:
        if fm.channels != self.w.shape[2]:
            raise ShapeError(f"{self.name}.w expects {self.w.shape[2]} input channels, got {fm.channels}")
        return conv2d(fm, self.w, stride=1, padding=self.kernel // 2, bias=self.b)


def _layer(store: WeightStore, name: str, cin: int | None, cout: int | None) -> ConvLayer:
    shape = store.shape_of(f"{name}.w")
    if len(shape) != 4 or shape[0] != shape[1] or shape[0] % 2 == 0:
        raise ShapeError(f"{name}.w must be an odd square K×K×Cin×Cout kernel, got {shape}")
    if cin is not None and shape[2] != cin:
        raise ShapeError(f"{name}.w has {shape[2]} input channels, expected {cin}")
    if cout is not None and shape[3] != cout:
        raise ShapeError(f"{name}.w has {shape[3]} output channels, expected {cout}")
    w = store.get(f"{name}.w", shape)
    b = store.get(f"{name}.b", (shape[3],))
    return ConvLayer(name, w, b)


@dataclass(frozen=True)
class GruWeights:
    """
    Convolutional GRU plus flow/score heads. Channel configuration is read
    from the tensors themselves: hidden = convz Cout, input = convz Cin - hidden.
    """

    convz: ConvLayer
    convr: ConvLayer
    convh: ConvLayer
    head_flow: ConvLayer
    head_score: ConvLayer

    @property
    def hidden_channels(self) -> int:
        return self.convz.w.shape[3]

    @property
    def input_channels(self) -> int:
        return self.convz.w.shape[2] - self.hidden_channels

    @classmethod
    def from_store(cls, store: WeightStore) -> "GruWeights":
        zshape = store.shape_of(f"{formats.GRU_CONVZ}.w")
        if len(zshape) != 4:
            raise ShapeError(f"{formats.GRU_CONVZ}.w must be rank 4, got {zshape}")
        cin, ch = zshape[2], zshape[3]
        if cin <= ch:
            raise ShapeError(f"{formats.GRU_CONVZ}.w input channels {cin} must exceed hidden channels {ch}")
        return cls(
            convz=_layer(store, formats.GRU_CONVZ, cin, ch),
            convr=_layer(store, formats.GRU_CONVR, cin, ch),
            convh=_layer(store, formats.GRU_CONVH, cin, ch),
            head_flow=_layer(store, formats.HEAD_FLOW, ch, 2),
            head_score=_layer(store, formats.HEAD_SCORE, ch, 1),
        )


def random_gru_store(
    rng: np.random.Generator,
    hidden: int,
    input_channels: int,
    kernel: int = 3,
    head_kernel: int = 3,
    scale: float = 0.1,
) -> WeightStore:
    """Small random weights; used for smoke runs and tests."""
    store = WeightStore()
    cin = hidden + input_channels
    for name in (formats.GRU_CONVZ, formats.GRU_CONVR, formats.GRU_CONVH):
        store.put(f"{name}.w", rng.normal(0.0, scale, (kernel, kernel, cin, hidden)))
        store.put(f"{name}.b", rng.normal(0.0, scale, hidden))
    for name, cout in ((formats.HEAD_FLOW, 2), (formats.HEAD_SCORE, 1)):
        store.put(f"{name}.w", rng.normal(0.0, scale, (head_kernel, head_kernel, hidden, cout)))
        store.put(f"{name}.b", rng.normal(0.0, scale, cout))
    return store


# =========================
# Update step
# =========================

def gru_inputs(
    pyr: CorrelationPyramid,
    flow: FlowField,
    context: FeatureMap | None,
    radius: int,
) -> FeatureMap:
    """x = [correlation lookup, flow (fx, fy), context]."""
    vis = flow.visibility.astype(bool)[..., None]
    coords = CoordGrid(flow.targets())
    corr = lookup(pyr, coords, radius)
    flow_fm = FeatureMap(np.where(vis, flow.flow, 0.0))
    return concat_channels(corr, flow_fm, context)


def gru_update(
    pyr: CorrelationPyramid,
    flow: FlowField,
    hidden: FeatureMap,
    context: FeatureMap | None,
    w: GruWeights,
    radius: int = DEFAULT_RADIUS,
) -> Tuple[FlowField, FeatureMap]:
    if tuple(pyr.source_shape) != flow.shape:
        raise ShapeError(f"pyramid source {pyr.source_shape} does not match flow {flow.shape}")
    if hidden.channels != w.hidden_channels:
        raise ShapeError(f"hidden state has {hidden.channels} channels, {formats.GRU_CONVZ}.w expects {w.hidden_channels}")

    x = gru_inputs(pyr, flow, context, radius)
    if x.channels != w.input_channels:
        cc = context.channels if context is not None else 0
        raise ShapeError(
            f"{formats.GRU_CONVZ}.w expects {w.input_channels} input channels, got {x.channels} "
            f"(lookup {lookup_channels(pyr.num_levels, radius)} + flow 2 + context {cc})"
        )

    h = hidden.data
    hx = concat_channels(hidden, x)
    z = sigmoid(w.convz(hx).data)
    r = sigmoid(w.convr(hx).data)
    q = np.tanh(w.convh(concat_channels(FeatureMap(r * h), x)).data)
    h_new = FeatureMap((1.0 - z) * h + z * q)

    delta = w.head_flow(h_new).data
    score = sigmoid(w.head_score(h_new).data[..., 0])

    vis = flow.visibility.astype(bool)
    new_flow = np.where(vis[..., None], flow.flow + delta, flow.flow)
    new_score = np.where(vis, score, flow.score)
    return FlowField(flow=new_flow, score=new_score, visibility=flow.visibility), h_new


# =========================
# Operator
# =========================

@dataclass
class GruParams:
    radius: int = DEFAULT_RADIUS


class GruOperator:
    name = "gru"

    def __init__(self, weights: GruWeights, params: GruParams | None = None, context: FeatureMap | None = None):
        self.w = weights
        self.p = params or GruParams()
        self.context = context

    def start(self, pyr: CorrelationPyramid, flow: FlowField) -> FeatureMap:
        # hidden state starts at zero; the context map only enters as input
        return FeatureMap.zeros(flow.height, flow.width, self.w.hidden_channels)

    def update(self, pyr: CorrelationPyramid, flow: FlowField, state: FeatureMap) -> Tuple[FlowField, FeatureMap]:
        return gru_update(pyr, flow, state, self.context, self.w, self.p.radius)
