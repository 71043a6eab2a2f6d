"""Spherical conventions, pinhole cameras and the icosahedral camera rig.

World frame: ``+x`` is azimuth 0, ``+y`` is azimuth ``+pi/2`` and ``+z`` is
elevation ``+pi/2``. ERP pixel ``i`` spans ``[i, i + 1)`` with its centre at
``i + 0.5``; column 0 starts at azimuth ``-pi`` and row 0 starts at the nadir
(elevation ``-pi/2``).

Cameras use the frame (forward, right, down). A pose stores the world-to-camera
rotation ``R``; a pixel ray in world coordinates is ``R^-1 K^-1 [p, 1]^T``.
Image right points toward increasing azimuth and image down toward increasing
elevation, so perspective views have the same handedness as the ERP canvas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Camera frame (x right, y down, z forward) of K^-1 -> (forward, right, down).
_CV_TO_CAM = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class SphericalCoord:
    theta: float
    phi: float

    def __post_init__(self):
        if not (-math.pi <= self.theta < math.pi):
            raise DomainError(f"theta={self.theta} outside [-pi, pi)")
        if not (-math.pi / 2 <= self.phi <= math.pi / 2):
            raise DomainError(f"phi={self.phi} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class ErpGrid:
    """A 2:1 equirectangular canvas and its latent down-sampling factor."""

    height: int
    width: int | None = None
    downsample_factor: int = 1

    def __post_init__(self):
        if self.width is None:
            object.__setattr__(self, "width", 2 * self.height)
        if self.height <= 0 or self.downsample_factor <= 0:
            raise DomainError("grid sizes must be positive")
        if self.width != 2 * self.height:
            raise DomainError(f"ERP width must be 2*height, got {self.height}x{self.width}")
        if self.height % (2 * self.downsample_factor):
            raise DomainError(
                f"height {self.height} not divisible by 2*f={2 * self.downsample_factor}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def latent(self) -> "ErpGrid":
        """The grid at latent resolution (factor 1)."""
        f = self.downsample_factor
        return ErpGrid(self.height // f)

    @property
    def view_size(self) -> int:
        """Side of a perspective latent, ``H / (2 f)``."""
        return self.height // (2 * self.downsample_factor)

    def pixel_angles(self) -> tuple[np.ndarray, np.ndarray]:
        """(theta, phi) at every pixel centre, each of shape (H, W)."""
        H, W = self.shape
        u = np.arange(W) + 0.5
        v = np.arange(H) + 0.5
        theta = 2 * np.pi * u / W - np.pi
        phi = np.pi * v / H - np.pi / 2
        return np.broadcast_to(theta, (H, W)).copy(), np.broadcast_to(phi[:, None], (H, W)).copy()

    def pixel_dirs(self) -> np.ndarray:
        """Unit directions (H, W, 3) through every pixel centre."""
        return dirs_from_angles(*self.pixel_angles())


def sph_from_erp_pixel(grid: ErpGrid, u: float, v: float) -> SphericalCoord:
    H, W = grid.shape
    if not (0 <= u < W and 0 <= v < H):
        raise DomainError(f"pixel ({u}, {v}) outside {W}x{H} canvas")
    return SphericalCoord(2 * math.pi * u / W - math.pi, math.pi * v / H - math.pi / 2)


def erp_pixel_from_sph(grid: ErpGrid, c: SphericalCoord) -> tuple[float, float]:
    H, W = grid.shape
    return W * (c.theta + math.pi) / (2 * math.pi), H * (c.phi + math.pi / 2) / math.pi


def dirs_from_angles(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    return np.stack([cp * np.cos(theta), cp * np.sin(theta), np.sin(phi)], axis=-1)


def angles_from_dirs(v) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth in [-pi, pi) and elevation of (..., 3) direction vectors."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.arctan2(v[..., 1], v[..., 0])
    theta = np.where(theta >= np.pi, theta - 2 * np.pi, theta)
    phi = np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1]))
    return theta, phi


def sph_from_ray(v) -> SphericalCoord:
    v = np.asarray(v, dtype=np.float64)
    if not np.any(v):
        raise DomainError("zero direction vector")
    theta, phi = angles_from_dirs(v)
    return SphericalCoord(float(theta), float(phi))


def erp_coords_from_dirs(grid: ErpGrid, v) -> tuple[np.ndarray, np.ndarray]:
    """Continuous ERP coordinates for (..., 3) directions (u is not wrapped)."""
    v = np.asarray(v, dtype=np.float64)
    H, W = grid.shape
    u = W * (np.arctan2(v[..., 1], v[..., 0]) + np.pi) / (2 * np.pi)
    vv = H * (np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1])) + np.pi / 2) / np.pi
    return u, vv


def erp_pixel_from_ray(grid: ErpGrid, v) -> tuple[float, float]:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise DomainError("expected a single 3-vector")
    if not np.any(v):
        raise DomainError("zero direction vector")
    u, vv = erp_coords_from_dirs(grid, v)
    return float(u), float(vv)


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation by ``angle`` about +z (toward increasing azimuth)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rotation ``R`` into the (forward, right, down) frame."""

    rotation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        if R.shape != (3, 3):
            raise DomainError("rotation must be 3x3")
        if np.abs(R @ R.T - np.eye(3)).max() >= 1e-9 or np.linalg.det(R) <= 0:
            raise DomainError("rotation is not in SO(3)")
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3))

    @classmethod
    def looking_at(cls, forward, down_hint=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Pose whose optical axis is ``forward``; image down leans toward ``down_hint``."""
        f = np.asarray(forward, dtype=np.float64)
        f = f / np.linalg.norm(f)
        ref = np.asarray(down_hint, dtype=np.float64)
        d = ref - ref.dot(f) * f
        if np.linalg.norm(d) < 1e-6:
            ref = np.array([1.0, 0.0, 0.0])
            d = ref - ref.dot(f) * f
        d = d / np.linalg.norm(d)
        r = np.cross(d, f)
        return cls(np.stack([f, r, d]))

    @classmethod
    def from_yaw(cls, angle: float) -> "CameraPose":
        return cls.identity().yawed(angle)

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[0].copy()

    def yawed(self, angle: float) -> "CameraPose":
        """The same camera turned by ``angle`` about the world +z axis."""
        return CameraPose(self.rotation @ yaw_matrix(angle).T)

    def key(self) -> bytes:
        return self.rotation.tobytes()


@dataclass(frozen=True)
class CameraIntrinsics:
    """Square-frustum pinhole camera: ``fov`` degrees both ways, ``height x width`` pixels."""

    fov: float
    height: int
    width: int | None = None

    def __post_init__(self):
        if self.width is None:
            object.__setattr__(self, "width", self.height)
        if not (0 < self.fov < 180):
            raise DomainError(f"fov={self.fov} outside (0, 180)")
        if self.height < 1 or self.width < 1:
            raise DomainError("image size must be at least 1x1")

    @property
    def matrix(self) -> np.ndarray:
        t = math.tan(math.radians(self.fov) / 2)
        fx = self.width / (2 * t)
        fy = self.height / (2 * t)
        return np.array([[fx, 0.0, self.width / 2], [0.0, fy, self.height / 2], [0.0, 0.0, 1.0]])

    def resized(self, size: int) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fov, size, size)


def ray_from_persp_pixel(K: CameraIntrinsics, R: CameraPose, p) -> np.ndarray:
    """Unit world ray through continuous pixel ``p = (x, y)``."""
    x, y = float(p[0]), float(p[1])
    if not (0 <= x <= K.width and 0 <= y <= K.height):
        raise DomainError(f"pixel {p} outside {K.width}x{K.height} image")
    return persp_rays(K, R, np.array([x]), np.array([y]))[0]


def persp_rays(K: CameraIntrinsics, R: CameraPose, x=None, y=None) -> np.ndarray:
    """World rays for pixel positions; defaults to every pixel centre, shape (h, w, 3)."""
    if x is None:
        ys, xs = np.meshgrid(np.arange(K.height) + 0.5, np.arange(K.width) + 0.5, indexing="ij")
    else:
        xs, ys = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    pix = np.stack([xs, ys, np.ones_like(xs)], axis=-1)
    cam = pix @ np.linalg.inv(K.matrix).T @ _CV_TO_CAM.T
    world = cam @ R.rotation  # R^-1 = R^T, applied to row vectors
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def persp_coords_from_dirs(K: CameraIntrinsics, R: CameraPose, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous pixel coordinates of world directions in a view, plus a front-facing flag."""
    cam = np.asarray(v, dtype=np.float64) @ R.rotation.T
    fwd = cam[..., 0]
    Km = K.matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        x = Km[0, 0] * cam[..., 1] / fwd + Km[0, 2]
        y = Km[1, 1] * cam[..., 2] / fwd + Km[1, 2]
    return x, y, fwd > 0


@dataclass(frozen=True, eq=False)
class CameraRig:
    poses: tuple
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    def yawed(self, angle: float) -> "CameraRig":
        return CameraRig(tuple(p.yawed(angle) for p in self.poses), self.intrinsics)

    def with_size(self, size: int) -> "CameraRig":
        return CameraRig(self.poses, self.intrinsics.resized(size))

    def key(self) -> tuple:
        K = self.intrinsics
        return (K.fov, K.height, K.width, b"".join(p.key() for p in self.poses))


def icosahedron_face_centers() -> np.ndarray:
    """The 20 unit face centres of a regular icosahedron with vertices on +-z.

    Upper-ring vertex ``k`` sits at azimuth ``2 pi k / 5``. Faces are ordered:
    top cap, upper band, lower band, bottom cap; by ring index within each.
    """
    z = 1 / math.sqrt(5)
    r = 2 / math.sqrt(5)
    top = np.array([0.0, 0.0, 1.0])
    bottom = -top
    up = [np.array([r * math.cos(2 * math.pi * k / 5), r * math.sin(2 * math.pi * k / 5), z]) for k in range(5)]
    lo = [
        np.array([r * math.cos(2 * math.pi * k / 5 + math.pi / 5), r * math.sin(2 * math.pi * k / 5 + math.pi / 5), -z])
        for k in range(5)
    ]
    faces = []
    faces += [(top, up[k], up[(k + 1) % 5]) for k in range(5)]
    faces += [(up[k], up[(k + 1) % 5], lo[k]) for k in range(5)]
    faces += [(lo[k], lo[(k + 1) % 5], up[(k + 1) % 5]) for k in range(5)]
    faces += [(bottom, lo[(k + 1) % 5], lo[k]) for k in range(5)]
    c = np.array([sum(f) / 3 for f in faces])
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def icosahedron_rig(image_size: int = 32, fov: float = 90.0) -> CameraRig:
    """Twenty cameras looking through the icosahedron face centres.

    Image-down for each camera is +z projected onto its image plane, with +x
    substituted when a face centre is (numerically) parallel to z.
    """
    poses = tuple(CameraPose.looking_at(f) for f in icosahedron_face_centers())
    return CameraRig(poses, CameraIntrinsics(fov, image_size, image_size))


def coverage_count(rig: CameraRig, grid: ErpGrid) -> np.ndarray:
    """Number of views whose frustum contains each ERP pixel-centre direction."""
    dirs = grid.pixel_dirs()
    count = np.zeros(grid.shape, dtype=np.int64)
    t = math.tan(math.radians(rig.intrinsics.fov) / 2)
    for pose in rig.poses:
        cam = dirs @ pose.rotation.T
        fwd = cam[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            inside = (fwd > 0) & (np.abs(cam[..., 1] / fwd) <= t) & (np.abs(cam[..., 2] / fwd) <= t)
        count += inside
    return count
