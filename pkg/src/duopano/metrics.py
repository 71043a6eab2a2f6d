"""Evaluation geometry: Frechet distance, seam score, overlap consistency, repetition."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DomainError, ShapeError
from .resample import PerspImage, backproject_persp_to_erp, check_erp, project_erp_to_persp
from .sphere import CameraIntrinsics, CameraPose, ErpGrid


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-9:
            raise DomainError("covariance is not symmetric")
        if len(cov) and np.linalg.eigvalsh(cov).min() < -1e-9:
            raise DomainError("covariance is not positive semi-definite")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=np.float64)))


def gaussian_stats(features) -> FeatureStats:
    X = np.asarray([np.ravel(f) for f in features], dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise DomainError("need at least two feature vectors of equal length")
    mu = X.mean(axis=0)
    D = X - mu
    cov = D.T @ D / (len(X) - 1)
    return FeatureStats(mu, (cov + cov.T) / 2, len(X))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root, negative eigenvalues clamped to 0."""
    w, V = np.linalg.eigh((m + m.T) / 2)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``.

    The last trace equals the sum of singular values of ``S_a^1/2 S_b^1/2``,
    which is symmetric in the two arguments even for rank-deficient inputs.
    """
    if a.mean.shape != b.mean.shape:
        raise ShapeError(f"feature dims differ: {a.mean.shape} vs {b.mean.shape}")
    cross = np.linalg.svd(psd_sqrt(a.cov) @ psd_sqrt(b.cov), compute_uv=False).sum()
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2 * cross)
    return max(value, 0.0)


@dataclass(frozen=True)
class SeamScore:
    seam: float
    baseline: float

    @property
    def ratio(self) -> float:
        if self.baseline == 0:
            return 1.0 if self.seam == 0 else float("inf")
        return self.seam / self.baseline


def seam_score(x: np.ndarray) -> SeamScore:
    """Mean |column 0 - column W-1| against the mean interior adjacent-column difference."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[-1] < 3:
        raise DomainError("seam score needs at least three columns")
    seam = float(np.abs(x[..., 0] - x[..., -1]).mean())
    baseline = float(np.abs(np.diff(x, axis=-1)).mean())
    return SeamScore(seam, baseline)


def overlap_consistency(views: Sequence[PerspImage], grid: ErpGrid) -> float:
    """Coverage-weighted mean of the per-pixel variance across views that see the pixel.

    Each view is backprojected on its own. A pixel seen by ``k >= 2`` views
    contributes its across-view variance with weight ``k``.
    """
    if len(views) < 2:
        raise DomainError("overlap consistency needs at least two views")
    stack, seen = [], []
    for view in views:
        img, w = backproject_persp_to_erp([view], grid)
        stack.append(img)
        seen.append(w > 0)
    stack = np.stack(stack)  # (N, C, H, W)
    seen = np.stack(seen)  # (N, H, W)
    k = seen.sum(axis=0)
    overlap = k >= 2
    if not overlap.any():
        raise DomainError("views have no overlapping coverage")
    mask = seen[:, None]
    kk = np.maximum(k, 1)[None]
    mean = (stack * mask).sum(axis=0) / kk[0]
    var = (((stack - mean) ** 2) * mask).sum(axis=0) / kk[0]  # (C, H, W)
    var = var.mean(axis=0)
    return float((var * k)[overlap].sum() / k[overlap].sum())


def _resize_bilinear(img: np.ndarray, h: int, w: int) -> np.ndarray:
    C, H, W = img.shape
    ys = (np.arange(h) + 0.5) * H / h - 0.5
    xs = (np.arange(w) + 0.5) * W / w - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([map_coordinates(c, [yy, xx], order=1, mode="nearest") for c in img])


class FlattenDownsample:
    """Bilinear resize to 8x16, then flatten."""

    name = "flatten-downsample"

    def __init__(self, height: int = 8, width: int = 16):
        self.height, self.width = height, width

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return _resize_bilinear(np.asarray(img, dtype=np.float64), self.height, self.width).ravel()


class RandomProjection:
    """Flatten-downsample followed by a fixed seeded Gaussian projection."""

    name = "random-projection"

    def __init__(self, dim: int = 64, seed: int = 0, channels: int = 3):
        self.base = FlattenDownsample()
        n_in = channels * self.base.height * self.base.width
        self.matrix = np.random.default_rng(seed).standard_normal((dim, n_in)) / np.sqrt(n_in)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return self.matrix @ self.base(img)


EmbeddingProvider = Callable[[np.ndarray], np.ndarray]


def providers(name: str, seed: int = 0) -> EmbeddingProvider:
    if name == FlattenDownsample.name:
        return FlattenDownsample()
    if name == RandomProjection.name:
        return RandomProjection(seed=seed)
    raise DomainError(f"unknown embedding provider {name!r}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(a @ a), float(b @ b)
    if na == 0 or nb == 0:
        raise DomainError("zero-norm embedding")
    # sqrt(na * nb) keeps identical vectors at exactly 1.
    return float(np.clip((a @ b) / np.sqrt(na * nb), -1.0, 1.0))


def pair_score(a: np.ndarray, b: np.ndarray) -> float:
    return max(100.0 * cosine(a, b), 0.0)


def cubemap_side_faces(pano: np.ndarray, size: int | None = None) -> list[np.ndarray]:
    """The four horizontal 90-degree faces at yaw 0, 90, 180 and 270 degrees."""
    grid = check_erp(pano)
    K = CameraIntrinsics(90.0, size or grid.height // 2)
    return [project_erp_to_persp(pano, CameraPose.from_yaw(k * np.pi / 2), K).data for k in range(4)]


def repetition_score(pano: np.ndarray, provider: EmbeddingProvider | None = None) -> float:
    """Mean clamped cosine score over the 6 unordered pairs of side faces, in [0, 100]."""
    provider = provider or FlattenDownsample()
    emb = [np.asarray(provider(f), dtype=np.float64) for f in cubemap_side_faces(pano)]
    scores = [pair_score(emb[i], emb[j]) for i, j in itertools.combinations(range(4), 2)]
    return float(np.mean(scores))
