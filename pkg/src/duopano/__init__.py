"""Dual-branch panorama diffusion mechanisms at desk scale.

Spherical geometry and resampling between equirectangular and perspective
images, projection-aware cross-attention between the two branches, a toy
dual-branch denoiser with loop-closure sampling, room-layout geometry, and
evaluation metrics.
"""

from .errors import DataError, DomainError, DuopanoError, FormatError, ShapeError, TrainingError
from .kernels import BACKEND
from .sphere import (
    CameraIntrinsics,
    CameraPose,
    CameraRig,
    ErpGrid,
    SphericalCoord,
    coverage_count,
    icosahedron_rig,
)
from .resample import PerspImage, backproject_persp_to_erp, project_erp_to_persp, project_to_rig
from .layout import RoomLayout, iou_2d, iou_3d, render_distance_map
from .ntf import ntf_read, ntf_write

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CameraIntrinsics",
    "CameraPose",
    "CameraRig",
    "DataError",
    "DomainError",
    "DuopanoError",
    "ErpGrid",
    "FormatError",
    "PerspImage",
    "RoomLayout",
    "ShapeError",
    "SphericalCoord",
    "TrainingError",
    "backproject_persp_to_erp",
    "coverage_count",
    "icosahedron_rig",
    "iou_2d",
    "iou_3d",
    "ntf_read",
    "ntf_write",
    "project_erp_to_persp",
    "project_to_rig",
    "render_distance_map",
]
