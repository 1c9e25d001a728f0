from __future__ import annotations

import logging

import numpy as np

from .base import FlowTrace, UpdateOperator, init_flow
from .correlation import DEFAULT_LEVELS, build_correlation, build_pyramid
from ..core.exceptions import ShapeError
from ..tensor.feature_map import FeatureMap

log = logging.getLogger(__name__)

DEFAULT_ITERS = 12


def estimate_flow(
    f_g2s: FeatureMap,
    f_s: FeatureMap,
    operator: UpdateOperator,
    iters: int = DEFAULT_ITERS,
    visibility: np.ndarray | None = None,
    num_levels: int = DEFAULT_LEVELS,
) -> FlowTrace:
    """Build the pyramid once, then run `iters` operator steps from zero flow."""
    if iters < 1:
        raise ShapeError(f"iters must be >= 1, got {iters}")

    pyr = build_pyramid(build_correlation(f_g2s, f_s), num_levels)
    flow = init_flow((f_g2s.height, f_g2s.width), visibility)
    state = operator.start(pyr, flow)

    iterations = []
    for it in range(iters):
        flow, state = operator.update(pyr, flow, state)
        iterations.append(flow)
        if log.isEnabledFor(logging.DEBUG):
            vis = flow.visibility.astype(bool)
            mag = np.linalg.norm(flow.flow[vis], axis=-1) if vis.any() else np.zeros(1)
            log.debug("%s iter %d: mean |flow| %.3f px, mean score %.4g", operator.name, it + 1, mag.mean(), flow.score[vis].mean() if vis.any() else 0.0)

    log.debug("flow estimated with %s over %d iterations on %dx%d grid", operator.name, iters, flow.height, flow.width)
    return FlowTrace(iterations)
