"""
Confidence-weighted least-squares SE(2) alignment

    argmin_{θ, t}  Σ S_i ‖R(θ) p'_i + t − p̂_i‖²

solved by weighted centroid reduction and the SVD of the weighted
cross-covariance, with an independent closed-form (atan2) path.

Every reduction over matches is an exactly rounded sum (math.fsum) over the
matches with S_i > 0, so zero-weight matches are inert bit for bit and
scaling all weights by a power of two leaves (θ, t) unchanged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .matches import MatchSet
from ..core.exceptions import NoSupportError, RotationIndeterminateError
from ..geometry.camera import BevGrid
from ..geometry.se2 import Se2Pose, rotation

log = logging.getLogger(__name__)

MIN_SPREAD_PX = 1e-9
DEGENERATE_RTOL = 1e-12


# =========================
# Result types
# =========================

@dataclass(frozen=True)
class SolverDiagnostics:
    g_src: np.ndarray           # weighted centroid g'
    g_dst: np.ndarray           # weighted centroid ĝ
    H: np.ndarray               # Σ S q' q̂ᵗ
    singular_values: np.ndarray
    residual: float             # ξ, weighted SSE in px²
    det_correction: bool


@dataclass(frozen=True)
class CameraFix:
    position_px: np.ndarray
    position_m: np.ndarray
    azimuth_deg: float


@dataclass(frozen=True)
class LocalizationResult:
    pose: Se2Pose
    camera_px: np.ndarray
    camera_m: np.ndarray
    azimuth_deg: float
    diagnostics: SolverDiagnostics

    def to_json(self, mpp: float) -> dict:
        return {
            "theta_rad": self.pose.theta,
            "tu_px": self.pose.tu,
            "tv_px": self.pose.tv,
            "mpp": mpp,
            "azimuth_deg": self.azimuth_deg,
            "pos_m": [float(v) for v in self.camera_m],
            "residual": self.diagnostics.residual,
        }


# =========================
# Shared reduction
# =========================

class Moments(NamedTuple):
    weights: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    total: float
    g_src: np.ndarray
    g_dst: np.ndarray
    q_src: np.ndarray
    q_dst: np.ndarray
    H: np.ndarray
    scale: float


def _fsum(values: np.ndarray) -> float:
    return math.fsum(values.tolist())


def weighted_moments(m: MatchSet) -> Moments:
    active = m.weights > 0.0
    w = m.weights[active]
    src = m.p_src[active]
    dst = m.p_dst[active]

    total = _fsum(w)
    if not total > 0.0:
        raise NoSupportError("all match weights are zero; nothing supports a pose")

    g_src = np.array([_fsum(w * src[:, 0]), _fsum(w * src[:, 1])]) / total
    g_dst = np.array([_fsum(w * dst[:, 0]), _fsum(w * dst[:, 1])]) / total
    q_src = src - g_src
    q_dst = dst - g_dst

    spread = float(np.max(np.hypot(q_src[:, 0], q_src[:, 1])))
    if spread <= MIN_SPREAD_PX:
        raise RotationIndeterminateError(f"source points have no spread ({spread:.3g} px); rotation is undetermined")

    H = np.array([
        [_fsum(w * q_src[:, 0] * q_dst[:, 0]), _fsum(w * q_src[:, 0] * q_dst[:, 1])],
        [_fsum(w * q_src[:, 1] * q_dst[:, 0]), _fsum(w * q_src[:, 1] * q_dst[:, 1])],
    ])
    scale = 0.5 * _fsum(w * (np.sum(q_src ** 2, axis=1) + np.sum(q_dst ** 2, axis=1)))
    return Moments(w, src, dst, total, g_src, g_dst, q_src, q_dst, H, scale)


def weighted_residual(mom: Moments, R: np.ndarray, t: np.ndarray) -> float:
    r = mom.src @ R.T + t - mom.dst
    return _fsum(mom.weights * np.sum(r ** 2, axis=1))


def camera_pose_from_alignment(pose: Se2Pose, grid: Optional[BevGrid], mpp: float) -> CameraFix:
    """Camera position R·anchor + t (px and m) and heading in degrees."""
    anchor = grid.anchor_xy if grid is not None else np.zeros(2)
    px = pose.R @ anchor + pose.t
    return CameraFix(position_px=px, position_m=px * mpp, azimuth_deg=math.degrees(pose.theta))


def _result(pose: Se2Pose, diag: SolverDiagnostics, grid: Optional[BevGrid], mpp: Optional[float]) -> LocalizationResult:
    if mpp is None:
        mpp = grid.meters_per_pixel if grid is not None else 1.0
    fix = camera_pose_from_alignment(pose, grid, mpp)
    return LocalizationResult(pose, fix.position_px, fix.position_m, fix.azimuth_deg, diag)


# =========================
# Solvers
# =========================

def solve_pose(m: MatchSet, grid: Optional[BevGrid] = None, mpp: Optional[float] = None) -> LocalizationResult:
    """SVD path: R = V diag(1, det(VUᵗ)) Uᵗ, t = ĝ − R g'."""
    mom = weighted_moments(m)

    peak = float(np.max(np.abs(mom.H)))
    if peak <= DEGENERATE_RTOL * mom.scale:
        raise RotationIndeterminateError("weighted cross-covariance vanishes; rotation is undetermined")
    # unit-scaled copy so the factorization is independent of the weight scale
    U, sv, Vt = np.linalg.svd(mom.H / peak)
    V = Vt.T
    det = np.linalg.det(V @ U.T)
    flip = det < 0.0
    D = np.diag([1.0, -1.0 if flip else 1.0])
    R = V @ D @ U.T

    theta = math.atan2(R[1, 0], R[0, 0])
    t = mom.g_dst - R @ mom.g_src
    xi = weighted_residual(mom, R, t)
    if flip:
        log.debug("reflection corrected in SVD alignment (det(VUᵗ) = %.3g)", det)

    diag = SolverDiagnostics(mom.g_src, mom.g_dst, mom.H, sv * peak, xi, bool(flip))
    return _result(Se2Pose(theta, t[0], t[1]), diag, grid, mpp)


def closed_form_angle(mom: Moments) -> Tuple[float, float, float]:
    """(θ, num, den) with θ = atan2(Σ S q'×q̂, Σ S q'·q̂)."""
    H = mom.H
    num = H[0, 1] - H[1, 0]
    den = H[0, 0] + H[1, 1]
    if math.hypot(num, den) <= DEGENERATE_RTOL * mom.scale:
        raise RotationIndeterminateError("both atan2 arguments vanish; rotation is undetermined")
    return math.atan2(num, den), num, den


def solve_pose_closed_form(m: MatchSet, grid: Optional[BevGrid] = None, mpp: Optional[float] = None) -> LocalizationResult:
    mom = weighted_moments(m)
    theta, _, _ = closed_form_angle(mom)
    R = rotation(theta)
    t = mom.g_dst - R @ mom.g_src
    xi = weighted_residual(mom, R, t)
    sv = np.linalg.svd(mom.H, compute_uv=False)
    diag = SolverDiagnostics(mom.g_src, mom.g_dst, mom.H, sv, xi, False)
    return _result(Se2Pose(theta, t[0], t[1]), diag, grid, mpp)


def solve_translation_only(
    m: MatchSet,
    theta: float,
    grid: Optional[BevGrid] = None,
    mpp: Optional[float] = None,
) -> LocalizationResult:
    """Known-orientation mode: θ is given, t = ĝ − R(θ) g'."""
    active = m.weights > 0.0
    w = m.weights[active]
    total = _fsum(w)
    if not total > 0.0:
        raise NoSupportError("all match weights are zero; nothing supports a pose")
    src, dst = m.p_src[active], m.p_dst[active]
    g_src = np.array([_fsum(w * src[:, 0]), _fsum(w * src[:, 1])]) / total
    g_dst = np.array([_fsum(w * dst[:, 0]), _fsum(w * dst[:, 1])]) / total
    R = rotation(theta)
    t = g_dst - R @ g_src
    r = src @ R.T + t - dst
    xi = _fsum(w * np.sum(r ** 2, axis=1))
    diag = SolverDiagnostics(g_src, g_dst, np.zeros((2, 2)), np.zeros(2), xi, False)
    return _result(Se2Pose(theta, t[0], t[1]), diag, grid, mpp)
