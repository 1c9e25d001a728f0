from .gradients import PoseGradients, gradcheck, pose_gradients
from .matches import MatchSet, flow_to_matches, load_matches_csv, save_matches_csv
from .procrustes import (
    LocalizationResult,
    SolverDiagnostics,
    camera_pose_from_alignment,
    solve_pose,
    solve_pose_closed_form,
    solve_translation_only,
)

__all__ = [
    "LocalizationResult",
    "MatchSet",
    "PoseGradients",
    "SolverDiagnostics",
    "camera_pose_from_alignment",
    "flow_to_matches",
    "gradcheck",
    "load_matches_csv",
    "pose_gradients",
    "save_matches_csv",
    "solve_pose",
    "solve_pose_closed_form",
    "solve_translation_only",
]
