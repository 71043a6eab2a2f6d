"""Warping between ERP and perspective images, loop-closure operators and joint noise.

ERP images are plain ``(C, H, W)`` arrays with ``W == 2 H``. Perspective images
are :class:`PerspImage` records carrying the camera that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import kernels
from .errors import DataError, DomainError, ShapeError
from .sphere import (
    CameraIntrinsics,
    CameraPose,
    CameraRig,
    ErpGrid,
    erp_coords_from_dirs,
    persp_rays,
    yaw_matrix,
)

SampleMode = Literal["nearest", "bilinear"]
SAMPLE_MODES = ("nearest", "bilinear")


@dataclass
class PerspImage:
    data: np.ndarray
    pose: CameraPose
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError("perspective data must be (C, h, w)")
        if self.data.shape[1:] != (self.intrinsics.height, self.intrinsics.width):
            raise ShapeError(f"data {self.data.shape} does not match intrinsics")


def check_erp(x: np.ndarray) -> ErpGrid:
    """Validate an ERP array and return its grid."""
    if x.ndim != 3:
        raise ShapeError(f"ERP image must be (C, H, W), got shape {x.shape}")
    _, H, W = x.shape
    try:
        return ErpGrid(H, W)
    except DomainError as exc:
        raise ShapeError(str(exc)) from None


_coords_cache: dict = {}


def projection_coords(grid: ErpGrid, pose: CameraPose, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Continuous ERP coordinates sampled by every pixel centre of a view (cached)."""
    key = (grid.shape, pose.key(), K)
    hit = _coords_cache.get(key)
    if hit is None:
        if len(_coords_cache) > 512:
            _coords_cache.clear()
        u, v = erp_coords_from_dirs(grid, persp_rays(K, pose))
        hit = (u.ravel(), v.ravel())
        _coords_cache[key] = hit
    return hit


def project_erp_to_persp(
    src: np.ndarray, pose: CameraPose, K: CameraIntrinsics, mode: SampleMode = "bilinear"
) -> PerspImage:
    grid = check_erp(src)
    if mode not in SAMPLE_MODES:
        raise DomainError(f"unknown sample mode {mode!r}")
    src = np.asarray(src, dtype=np.float64)
    if not np.all(np.isfinite(src)):
        raise DataError("source image contains non-finite values")
    u, v = projection_coords(grid, pose, K)
    sample = kernels.sample_bilinear if mode == "bilinear" else kernels.sample_nearest
    out = sample(src, u, v).reshape(src.shape[0], K.height, K.width)
    return PerspImage(out, pose, K)


def project_to_rig(src: np.ndarray, rig: CameraRig, mode: SampleMode = "bilinear") -> list[PerspImage]:
    # Views are independent; order is the rig order.
    return [project_erp_to_persp(src, pose, rig.intrinsics, mode) for pose in rig.poses]


def backproject_persp_to_erp(views: Sequence[PerspImage], grid: ErpGrid) -> tuple[np.ndarray, np.ndarray]:
    """Splat views into an ERP canvas; returns ``(image, weight)``.

    Each view pixel deposits its value with bilinear footprint weights (no
    solid-angle correction). Pixels receiving no weight are 0.
    """
    H, W = grid.shape
    if not views:
        return np.zeros((0, H, W)), np.zeros((H, W))
    C = views[0].data.shape[0]
    if any(v.data.shape[0] != C for v in views):
        raise ShapeError("all views must share a channel count")
    acc = np.zeros((C, H, W))
    weight = np.zeros((H, W))
    for view in views:
        u, v = projection_coords(grid, view.pose, view.intrinsics)
        a, w = kernels.splat_bilinear(view.data.reshape(C, -1), u, v, H, W)
        acc += a
        weight += w
    out = np.divide(acc, weight, out=np.zeros_like(acc), where=weight > 0)
    return out, weight


def circular_pad(x, pad: int):
    """Pad the last (width) axis cyclically by ``pad`` columns on each side.

    Works for numpy arrays and torch tensors.
    """
    W = x.shape[-1]
    if pad < 0 or pad > W:
        raise DomainError(f"pad {pad} outside [0, {W}]")
    if pad == 0:
        return x
    if isinstance(x, np.ndarray):
        return np.concatenate([x[..., W - pad :], x, x[..., :pad]], axis=-1)
    import torch

    return torch.cat([x[..., W - pad :], x, x[..., :pad]], dim=-1)


def crop_pad(x, pad: int):
    """Inverse of :func:`circular_pad` on the width axis."""
    return x if pad == 0 else x[..., pad:-pad]


def latent_roll(z, quarter_turns: int):
    """Cyclic shift by ``quarter_turns * W / 4`` columns toward increasing azimuth."""
    W = z.shape[-1]
    if W % 4:
        raise DomainError(f"width {W} not divisible by 4")
    shift = (quarter_turns * (W // 4)) % W
    if isinstance(z, np.ndarray):
        return np.roll(z, shift, axis=-1)
    import torch

    return torch.roll(z, shift, dims=-1)


def rig_for_turns(rig: CameraRig, quarter_turns: int) -> CameraRig:
    """The rig yawed in lockstep with ``latent_roll(z, quarter_turns)``."""
    turns = quarter_turns % 4
    if turns == 0:
        return rig
    # Exact quarter-turn matrix avoids cos(pi/2) round-off.
    Y = np.rint(yaw_matrix(turns * np.pi / 2))
    return CameraRig(tuple(CameraPose(p.rotation @ Y.T) for p in rig.poses), rig.intrinsics)


def view_intrinsics(grid: ErpGrid, rig: CameraRig) -> CameraIntrinsics:
    """Intrinsics of the perspective latents for ``grid``: side ``H / (2 f)``."""
    return CameraIntrinsics(rig.intrinsics.fov, grid.view_size, grid.view_size)


def joint_index_map(grid: ErpGrid, rig: CameraRig) -> np.ndarray:
    """Flat pano-latent index feeding each view-latent pixel under nearest projection.

    Shape ``(N, s, s)``; gathering with it is exactly ``project_erp_to_persp``
    in nearest mode.
    """
    lat = grid.latent
    K = view_intrinsics(grid, rig)
    H, W = lat.shape
    idx = [kernels.nearest_index(*projection_coords(lat, p, K), H, W) for p in rig.poses]
    return np.stack(idx).reshape(len(rig), K.height, K.width)


def joint_noise_init(
    grid: ErpGrid, rig: CameraRig, seed, channels: int = 4
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Gaussian panorama latent and view latents projected from it (nearest)."""
    rng = np.random.default_rng(seed)
    lat = grid.latent
    pano = rng.standard_normal((channels, lat.height, lat.width))
    K = view_intrinsics(grid, rig)
    views = [project_erp_to_persp(pano, pose, K, "nearest").data for pose in rig.poses]
    return pano, views


def independent_noise_init(
    grid: ErpGrid, rig: CameraRig, seed, channels: int = 4
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Ablation of :func:`joint_noise_init`: every latent drawn separately."""
    rng = np.random.default_rng(seed)
    lat = grid.latent
    pano = rng.standard_normal((channels, lat.height, lat.width))
    s = grid.view_size
    views = [rng.standard_normal((channels, s, s)) for _ in rig.poses]
    return pano, views
