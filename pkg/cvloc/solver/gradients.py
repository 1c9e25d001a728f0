"""
Analytic derivatives of the weighted alignment (θ, t) with respect to every
match coordinate and weight, obtained by differentiating the closed form

    θ = atan2(num, den),  num = Σ S q'×q̂,  den = Σ S q'·q̂,  t = ĝ − R(θ) g'

including the dependence of the centroids on each match. Because
Σ S q' = Σ S q̂ = 0 the centroid terms drop out of dnum and dden.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .matches import MatchSet
from .procrustes import closed_form_angle, weighted_moments
from ..core.exceptions import ConditioningError
from ..geometry.se2 import rotation, wrap_angle

log = logging.getLogger(__name__)

MIN_CONDITION = 1e-9
J = np.array([[0.0, -1.0], [1.0, 0.0]])

FD_STEP = 1e-6
GRAD_RTOL = 1e-5
GRAD_ATOL = 1e-8


@dataclass(frozen=True)
class PoseGradients:
    dtheta_dp_src: np.ndarray   # n×2
    dtheta_dp_dst: np.ndarray   # n×2
    dtheta_dS: np.ndarray       # n
    dt_dp_src: np.ndarray       # n×2×2, [i, t component, p component]
    dt_dp_dst: np.ndarray       # n×2×2
    dt_dS: np.ndarray           # n×2

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {
            "dtheta_dp_src": self.dtheta_dp_src,
            "dtheta_dp_dst": self.dtheta_dp_dst,
            "dtheta_dS": self.dtheta_dS,
            "dt_dp_src": self.dt_dp_src,
            "dt_dp_dst": self.dt_dp_dst,
            "dt_dS": self.dt_dS,
        }


def pose_gradients(m: MatchSet) -> PoseGradients:
    mom = weighted_moments(m)
    theta, num, den = closed_form_angle(mom)
    cond = num * num + den * den
    if cond <= MIN_CONDITION:
        raise ConditioningError(f"closed-form alignment is ill-conditioned (num² + den² = {cond:.3g})")

    n = m.n
    active = m.weights > 0.0
    w = mom.weights[:, None]
    qs, qd = mom.q_src, mom.q_dst

    # partials of num and den on the active matches
    dnum_dsrc = w * np.stack([qd[:, 1], -qd[:, 0]], axis=1)
    dnum_ddst = w * np.stack([-qs[:, 1], qs[:, 0]], axis=1)
    dden_dsrc = w * qd
    dden_ddst = w * qs
    dnum_dS = qs[:, 0] * qd[:, 1] - qs[:, 1] * qd[:, 0]
    dden_dS = np.sum(qs * qd, axis=1)

    def dtheta(dnum, dden):
        return (den * dnum - num * dden) / cond

    th_src = dtheta(dnum_dsrc, dden_dsrc)
    th_dst = dtheta(dnum_ddst, dden_ddst)
    th_S = dtheta(dnum_dS, dden_dS)

    R = rotation(theta)
    lever = R @ J @ mom.g_src          # dR/dθ · g'
    ratio = mom.weights / mom.total
    eye = np.eye(2)

    t_src = -lever[None, :, None] * th_src[:, None, :] - ratio[:, None, None] * R[None]
    t_dst = ratio[:, None, None] * eye[None] - lever[None, :, None] * th_dst[:, None, :]
    t_S = qd / mom.total - lever[None, :] * th_S[:, None] - (qs @ R.T) / mom.total

    # zero-weight matches influence nothing except through their own S
    out = {
        "dtheta_dp_src": np.zeros((n, 2)),
        "dtheta_dp_dst": np.zeros((n, 2)),
        "dtheta_dS": np.zeros(n),
        "dt_dp_src": np.zeros((n, 2, 2)),
        "dt_dp_dst": np.zeros((n, 2, 2)),
        "dt_dS": np.zeros((n, 2)),
    }
    out["dtheta_dp_src"][active] = th_src
    out["dtheta_dp_dst"][active] = th_dst
    out["dtheta_dS"][active] = th_S
    out["dt_dp_src"][active] = t_src
    out["dt_dp_dst"][active] = t_dst
    out["dt_dS"][active] = t_S

    inactive = ~active
    if np.any(inactive):
        # S_i = 0 still has a one-sided derivative: the match enters with q' = p' − g', q̂ = p̂ − ĝ
        qs0 = m.p_src[inactive] - mom.g_src
        qd0 = m.p_dst[inactive] - mom.g_dst
        th0 = dtheta(qs0[:, 0] * qd0[:, 1] - qs0[:, 1] * qd0[:, 0], np.sum(qs0 * qd0, axis=1))
        out["dtheta_dS"][inactive] = th0
        out["dt_dS"][inactive] = qd0 / mom.total - lever[None, :] * th0[:, None] - (qs0 @ R.T) / mom.total

    return PoseGradients(**out)


# =========================
# Finite-difference audit
# =========================

def _closed_form_pose(src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> Tuple[float, np.ndarray]:
    mom = weighted_moments(MatchSet(src, dst, w))
    theta, _, _ = closed_form_angle(mom)
    return theta, mom.g_dst - rotation(theta) @ mom.g_src


def finite_difference_gradients(m: MatchSet, step: float = FD_STEP) -> PoseGradients:
    """Central differences of the closed-form pose; angle differences are wrapped."""
    n = m.n
    src, dst, w = m.p_src.copy(), m.p_dst.copy(), m.weights.copy()

    def central(arr: np.ndarray, idx) -> Tuple[float, np.ndarray]:
        keep = arr[idx]
        arr[idx] = keep + step
        th_p, t_p = _closed_form_pose(src, dst, w)
        arr[idx] = keep - step
        th_m, t_m = _closed_form_pose(src, dst, w)
        arr[idx] = keep
        return wrap_angle(th_p - th_m) / (2 * step), (t_p - t_m) / (2 * step)

    g = PoseGradients(
        np.zeros((n, 2)), np.zeros((n, 2)), np.zeros(n),
        np.zeros((n, 2, 2)), np.zeros((n, 2, 2)), np.zeros((n, 2)),
    )
    for i in range(n):
        for k in range(2):
            g.dtheta_dp_src[i, k], g.dt_dp_src[i, :, k] = central(src, (i, k))
            g.dtheta_dp_dst[i, k], g.dt_dp_dst[i, :, k] = central(dst, (i, k))
        if w[i] > step:
            g.dtheta_dS[i], g.dt_dS[i] = central(w, i)
    return g


@dataclass
class GradcheckReport:
    max_rel_error: Dict[str, float] = field(default_factory=dict)
    worst_index: Dict[str, int] = field(default_factory=dict)
    sets: int = 0
    rtol: float = GRAD_RTOL

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.rtol

    def merge(self, other: "GradcheckReport") -> None:
        for key, err in other.max_rel_error.items():
            if err >= self.max_rel_error.get(key, -1.0):
                self.max_rel_error[key] = err
                self.worst_index[key] = other.worst_index[key]
        self.sets += other.sets

    def to_json(self) -> dict:
        return {
            "sets": self.sets,
            "rtol": self.rtol,
            "max_rel_error": dict(sorted(self.max_rel_error.items())),
            "worst_index": dict(sorted(self.worst_index.items())),
            "passed": self.passed,
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = GRAD_ATOL) -> np.ndarray:
    """|a − f| / max(|a|, |f|); differences under `atol` count as exact."""
    diff = np.abs(analytic - numeric)
    mag = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff <= atol, 0.0, diff / mag)
    return rel


def gradcheck(m: MatchSet, step: float = FD_STEP, rtol: float = GRAD_RTOL, atol: float = GRAD_ATOL) -> GradcheckReport:
    analytic = pose_gradients(m).as_dict()
    numeric = finite_difference_gradients(m, step).as_dict()
    report = GradcheckReport(sets=1, rtol=rtol)
    index = np.arange(m.n)
    for key, a in analytic.items():
        f = numeric[key]
        idx = index
        if key.endswith("_dS"):
            # weights too small for a central step are not audited
            usable = m.weights > step
            a, f, idx = a[usable], f[usable], index[usable]
        if a.size == 0:
            continue
        per_match = relative_error(a, f, atol).reshape(len(idx), -1).max(axis=1)
        report.max_rel_error[key] = float(per_match.max())
        report.worst_index[key] = int(idx[int(np.argmax(per_match))])
    log.debug("gradcheck n=%d worst=%.3g", m.n, report.worst)
    return report
