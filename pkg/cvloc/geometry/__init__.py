from .camera import BevGrid, CameraModel
from .projection import ground_to_bev_lookup, project_ground_features
from .se2 import Se2Pose, se2_apply, wrap_angle

__all__ = [
    "BevGrid",
    "CameraModel",
    "Se2Pose",
    "ground_to_bev_lookup",
    "project_ground_features",
    "se2_apply",
    "wrap_angle",
]
