"""Equirectangular-perspective projection attention (EPPA).

Geometry (spherical positional encodings and soft projection masks) is built
with numpy once per (grid, rig, sigma) and cached. The attention itself is a
torch module so the toy denoiser can train through it.

Token layout: panorama positions are flattened row-major, ``j * w + k``;
perspective positions are view-major then row-major, ``i * s * s + a * s + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import correlate1d
from torch import nn

from . import kernels
from .errors import DataError, DomainError, ShapeError
from .resample import project_erp_to_persp, projection_coords
from .sphere import CameraIntrinsics, CameraRig, ErpGrid, SphericalCoord


@dataclass(frozen=True)
class SpeConfig:
    channels: int

    def __post_init__(self):
        if self.channels <= 0 or self.channels % 4:
            raise DomainError(f"SPE channels must be a positive multiple of 4, got {self.channels}")

    @property
    def bands(self) -> int:
        return self.channels // 4


def fourier_features(x: np.ndarray, bands: int) -> np.ndarray:
    """``[sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]`` on a new last axis."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    freq = np.pi * 2.0 ** np.arange(bands)
    ang = x * freq
    out = np.empty(x.shape[:-1] + (2 * bands,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def spe_angles(theta, phi, bands: int) -> np.ndarray:
    """Encoding of azimuth/elevation arrays after normalising both to [-1, 1]."""
    t = np.asarray(theta, dtype=np.float64) / np.pi
    p = 2.0 * np.asarray(phi, dtype=np.float64) / np.pi
    return np.concatenate([fourier_features(t, bands), fourier_features(p, bands)], axis=-1)


def spe_encode(cfg: SpeConfig, c: SphericalCoord) -> np.ndarray:
    return spe_angles(c.theta, c.phi, cfg.bands)


def feature_view_intrinsics(feat_grid: ErpGrid, rig: CameraRig) -> CameraIntrinsics:
    """Views at feature resolution are ``h/2`` square for a ``h x 2h`` panorama map."""
    s = feat_grid.height // 2
    return CameraIntrinsics(rig.intrinsics.fov, s, s)


def build_spe_maps(cfg: SpeConfig, feat_grid: ErpGrid, rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Panorama SPE map (c, h, w) and per-view maps (N, c, h/2, h/2).

    View maps are nearest-projected from the panorama map, so corresponding
    pixels carry identical vectors.
    """
    theta, phi = feat_grid.pixel_angles()
    pano = np.moveaxis(spe_angles(theta, phi, cfg.bands), -1, 0)
    K = feature_view_intrinsics(feat_grid, rig)
    views = np.stack([project_erp_to_persp(pano, pose, K, "nearest").data for pose in rig.poses])
    return pano, views


def gaussian_kernel1d(sigma: float, size: int = 5) -> np.ndarray:
    r = np.arange(size) - size // 2
    k = np.exp(-(r**2) / (2 * sigma**2))
    return k / k.sum()


@dataclass(frozen=True)
class EppaMask:
    """Soft mask for the perspective-to-panorama direction, shape (h*w, N*s*s)."""

    matrix: np.ndarray

    @property
    def reverse(self) -> np.ndarray:
        """Mask for the panorama-to-perspective direction (a transposed view)."""
        return self.matrix.T

    @property
    def shape(self):
        return self.matrix.shape


_mask_cache: dict = {}


def build_attention_masks(feat_grid: ErpGrid, rig: CameraRig, sigma: float = 1.0) -> EppaMask:
    """One soft row per panorama pixel over all view pixels, values in [-1, 1].

    A one-hot panorama image is projected bilinearly into every view, blurred
    with a 5x5 Gaussian in view space (zero outside the view), and the stacked
    row is rescaled from [0, max] to [-1, 1]. Rows no view samples are -1.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    key = (feat_grid.shape, rig.key(), float(sigma))
    hit = _mask_cache.get(key)
    if hit is not None:
        return hit
    h, w = feat_grid.shape
    K = feature_view_intrinsics(feat_grid, rig)
    s = K.height
    N = len(rig)
    P = h * w
    # raw[p, i, a, b]: weight with which view pixel (a, b) of view i samples pano pixel p.
    raw = np.zeros((P, N, s * s))
    eye_cols = np.arange(s * s)
    for i, pose in enumerate(rig.poses):
        u, v = projection_coords(feat_grid, pose, K)
        # Splatting a one-hot per view pixel recovers the bilinear sampling weights.
        for corner_w, flat in _bilinear_taps(u, v, h, w):
            np.add.at(raw, (flat, i, eye_cols), corner_w)
    raw = raw.reshape(P * N, s, s)
    g = gaussian_kernel1d(sigma)
    raw = correlate1d(raw, g, axis=1, mode="constant")
    raw = correlate1d(raw, g, axis=2, mode="constant")
    raw = raw.reshape(P, N * s * s)
    peak = raw.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(peak > 0, 2.0 * raw / peak - 1.0, -1.0)
    mask = EppaMask(m)
    if len(_mask_cache) > 16:
        _mask_cache.clear()
    _mask_cache[key] = mask
    return mask


def _bilinear_taps(u, v, H, W):
    """The four (weight, flat index) taps of bilinear sampling at each position."""
    x = u - 0.5
    y = v - 0.5
    x0f, y0f = np.floor(x), np.floor(y)
    fx, fy = x - x0f, y - y0f
    x0 = np.mod(x0f.astype(np.int64), W)
    x1 = np.mod(x0 + 1, W)
    y0 = y0f.astype(np.int64)
    y1 = np.clip(y0 + 1, 0, H - 1)
    y0 = np.clip(y0, 0, H - 1)
    return (
        ((1 - fx) * (1 - fy), y0 * W + x0),
        (fx * (1 - fy), y0 * W + x1),
        ((1 - fx) * fy, y1 * W + x0),
        (fx * fy, y1 * W + x1),
    )


def nearest_feature_index(feat_grid: ErpGrid, rig: CameraRig) -> np.ndarray:
    """Pano pixel feeding each view pixel under nearest projection, shape (N, s, s)."""
    K = feature_view_intrinsics(feat_grid, rig)
    h, w = feat_grid.shape
    idx = [kernels.nearest_index(*projection_coords(feat_grid, p, K), h, w) for p in rig.poses]
    return np.stack(idx).reshape(len(rig), K.height, K.width)


class EppaParams(nn.Module):
    """Parameters of one insertion site, shared by both attention directions.

    ``out`` is the zero-initialised 1x1 projection of the attention output
    (a 1x1 convolution acting on the flattened token axis).
    """

    def __init__(self, channels: int, sigma: float = 1.0):
        super().__init__()
        if not sigma > 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        self.channels = channels
        self.sigma = sigma
        self.q = nn.Linear(channels, channels, bias=False)
        self.k = nn.Linear(channels, channels, bias=False)
        self.v = nn.Linear(channels, channels, bias=False)
        self.out = nn.Linear(channels, channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)


def _tokens(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:  # panorama (c, h, w)
        return x.reshape(x.shape[0], -1).T
    if x.dim() == 4:  # views (N, c, s, s)
        return x.permute(0, 2, 3, 1).reshape(-1, x.shape[1])
    raise ShapeError(f"feature map must be 3-D or 4-D, got {tuple(x.shape)}")


def _untokens(t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    if like.dim() == 3:
        return t.T.reshape(like.shape)
    N, c, s1, s2 = like.shape
    return t.reshape(N, s1, s2, c).permute(0, 3, 1, 2)


def attention_weights(params: EppaParams, target, source, target_spe, source_spe, mask) -> torch.Tensor:
    """Row-softmax of ``Q K^T / sqrt(c) + M``; rows index target positions."""
    q = params.q(_tokens(target + target_spe))
    k = params.k(_tokens(source + source_spe))
    affinity = q @ k.T / math.sqrt(params.channels)
    if mask.shape != affinity.shape:
        raise ShapeError(f"mask {tuple(mask.shape)} does not match affinity {tuple(affinity.shape)}")
    return torch.softmax(affinity + mask, dim=-1)


def eppa_apply(params: EppaParams, target, source, target_spe, source_spe, mask) -> torch.Tensor:
    """Masked cross-attention from ``source`` into ``target`` with a residual.

    ``target_spe``/``source_spe`` broadcast against the features (pass 0 to
    disable the encoding). Values carry no positional encoding.
    """
    if target.shape[-3] != params.channels or source.shape[-3] != params.channels:
        raise ShapeError("feature channels do not match the EPPA parameters")
    for name, t in (("target", target), ("source", source)):
        if not torch.isfinite(t).all():
            raise DataError(f"non-finite values in EPPA {name}")
    weights = attention_weights(params, target, source, target_spe, source_spe, mask)
    out = weights @ params.v(_tokens(source))
    return target + _untokens(params.out(out), target)


class EppaSite(nn.Module):
    """Bidirectional EPPA at one resolution, one parameter set for both directions."""

    def __init__(self, channels: int, sigma: float = 1.0):
        super().__init__()
        self.params = EppaParams(channels, sigma)

    def forward(self, pano, views, pano_spe, view_spe, mask):
        """``mask`` is the (h*w, N*s*s) tensor; its transpose serves the other direction."""
        new_pano = eppa_apply(self.params, pano, views, pano_spe, view_spe, mask)
        new_views = eppa_apply(self.params, views, pano, view_spe, pano_spe, mask.T)
        return new_pano, new_views
