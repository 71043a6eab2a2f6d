"""Room layouts: distance-map rendering and 2D/3D layout IoU.

A layout is a floor polygon in metres (plan coordinates, camera at the
origin), a camera height and a ceiling height, both measured from the floor.
Walls are the polygon edges extruded from floor to ceiling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError
from .sphere import ErpGrid


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


def is_simple(poly: np.ndarray) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue  # adjacent edges share a vertex
            if _segments_cross(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


def is_convex(poly: np.ndarray) -> bool:
    d1 = np.roll(poly, -1, axis=0) - poly
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cross >= -1e-12) or np.all(cross <= 1e-12))


def points_in_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorised over points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        cond = (y1 > py) != (y2 > py)
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (px < xint)
    return inside


@dataclass(frozen=True, eq=False)
class RoomLayout:
    floor_polygon: np.ndarray
    camera_height: float
    ceiling_height: float

    def __post_init__(self):
        poly = np.array(self.floor_polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise DomainError("floor polygon needs at least three 2-D vertices")
        if not np.all(np.isfinite(poly)):
            raise DomainError("floor polygon has non-finite vertices")
        area = signed_area(poly)
        if abs(area) <= 1e-12:
            raise DomainError("floor polygon is degenerate (zero area)")
        if area < 0:
            poly = poly[::-1].copy()
        if not is_simple(poly):
            raise DomainError("floor polygon self-intersects")
        if not (0 < self.camera_height < self.ceiling_height):
            raise DomainError("need 0 < camera_height < ceiling_height")
        poly.setflags(write=False)
        object.__setattr__(self, "floor_polygon", poly)

    @property
    def area(self) -> float:
        return signed_area(self.floor_polygon)

    @property
    def volume(self) -> float:
        return self.area * self.ceiling_height

    def contains_origin(self) -> bool:
        return bool(points_in_polygon(np.zeros(1), np.zeros(1), self.floor_polygon)[0])

    @classmethod
    def box(cls, width_x: float, width_y: float, camera_height: float, ceiling_height: float, center=(0.0, 0.0)):
        cx, cy = center
        hx, hy = width_x / 2, width_y / 2
        poly = [[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]]
        return cls(np.array(poly), camera_height, ceiling_height)

    @classmethod
    def from_dict(cls, d: dict) -> "RoomLayout":
        try:
            return cls(np.array(d["floor"], dtype=np.float64), float(d["camera_height"]), float(d["ceiling_height"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DataError(f"bad layout record: {exc}") from None

    @classmethod
    def load(cls, path) -> "RoomLayout":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "floor": self.floor_polygon.tolist(),
            "camera_height": self.camera_height,
            "ceiling_height": self.ceiling_height,
        }


def ray_distances(layout: RoomLayout, dirs: np.ndarray) -> np.ndarray:
    """Distance from the camera to the first surface along each unit direction (..., 3)."""
    d = np.asarray(dirs, dtype=np.float64)
    shape = d.shape[:-1]
    d = d.reshape(-1, 3)
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    h, top = layout.camera_height, layout.ceiling_height - layout.camera_height
    best = np.full(len(d), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        best = np.where(dz < 0, -h / dz, best)
        best = np.where(dz > 0, top / dz, best)
        poly = layout.floor_polygon
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            e = b - a
            denom = dx * e[1] - dy * e[0]
            t = (a[0] * e[1] - a[1] * e[0]) / denom
            s = (a[0] * dy - a[1] * dx) / denom
            hit = (denom != 0) & (t > 0) & (s >= 0) & (s <= 1)
            best = np.where(hit & (t < best), t, best)
    return best.reshape(shape)


def render_distance_map(layout: RoomLayout, grid: ErpGrid, normalized: bool = False) -> np.ndarray:
    """(1, H, W) Euclidean distance map; ``normalized`` rescales per image to [-1, 1]."""
    if not layout.contains_origin():
        raise DomainError("camera (plan origin) lies outside the floor polygon")
    dist = ray_distances(layout, grid.pixel_dirs())
    if not np.all(np.isfinite(dist)):
        raise DataError("a ray escaped the room; the floor polygon is broken")
    if normalized:
        lo, hi = dist.min(), dist.max()
        dist = np.zeros_like(dist) if hi == lo else 2 * (dist - lo) / (hi - lo) - 1
    return dist[None]


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman intersection of two counter-clockwise convex polygons."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        a, b = clip[i], clip[(i + 1) % n]
        inp, out = out, []
        if not inp:
            break

        def side(p):
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

        def cross_point(p, q):
            sp, sq = side(p), side(q)
            t = sp / (sp - sq)
            return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

        prev = inp[-1]
        for cur in inp:
            if side(cur) >= 0:
                if side(prev) < 0:
                    out.append(cross_point(prev, cur))
                out.append(cur)
            elif side(prev) >= 0:
                out.append(cross_point(prev, cur))
            prev = cur
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    inter = clip_convex(a, b)
    return signed_area(inter) if len(inter) >= 3 else 0.0


def raster_iou(a: np.ndarray, b: np.ndarray, cell: float = 0.01) -> float:
    """IoU of two simple polygons by point sampling at cell centres."""
    lo = np.minimum(a.min(0), b.min(0))
    hi = np.maximum(a.max(0), b.max(0))
    xs = np.arange(lo[0], hi[0], cell) + cell / 2
    ys = np.arange(lo[1], hi[1], cell) + cell / 2
    inter = union = 0
    for y in ys:  # row by row keeps memory flat
        py = np.full_like(xs, y)
        ia = points_in_polygon(xs, py, a)
        ib = points_in_polygon(xs, py, b)
        inter += int(np.count_nonzero(ia & ib))
        union += int(np.count_nonzero(ia | ib))
    return inter / union if union else 0.0


def polygon_iou(a: np.ndarray, b: np.ndarray) -> float:
    if is_convex(a) and is_convex(b):
        inter = convex_intersection_area(a, b)
        union = signed_area(a) + signed_area(b) - inter
        return float(np.clip(inter / union, 0.0, 1.0))
    return raster_iou(a, b)


def iou_2d(a: RoomLayout, b: RoomLayout) -> float:
    return polygon_iou(a.floor_polygon, b.floor_polygon)


def iou_3d(a: RoomLayout, b: RoomLayout) -> float:
    pa, pb = a.floor_polygon, b.floor_polygon
    if is_convex(pa) and is_convex(pb):
        inter_area = convex_intersection_area(pa, pb)
    else:
        r = raster_iou(pa, pb)
        inter_area = r * (a.area + b.area) / (1 + r)
    inter = inter_area * min(a.ceiling_height, b.ceiling_height)
    union = a.volume + b.volume - inter
    return float(np.clip(inter / union, 0.0, 1.0))
