"""Procedural panoramas used as a desk-scale training set.

Every pixel is a function of its viewing direction only, so images are
seamless by construction. The scene is a sky gradient, a sun with a seeded
azimuth, and a checkerboard floor on the plane ``z = -1`` (one cell centred
under the camera, board turned 30 degrees so no mirror axis of the board
lies on the seam meridian). The condition label is the sun's
azimuth bucket.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..resample import PerspImage, project_to_rig
from ..sphere import CameraRig, ErpGrid, dirs_from_angles, icosahedron_rig

N_BUCKETS = 8

SKY_HORIZON = np.array([0.82, 0.84, 0.90])
SKY_ZENITH = np.array([0.20, 0.40, 0.80])
SUN = np.array([1.0, 0.97, 0.85])
CHECK_LIGHT = np.array([0.78, 0.72, 0.62])
CHECK_DARK = np.array([0.28, 0.24, 0.22])


@dataclass(frozen=True)
class SynthParams:
    grid: ErpGrid = field(default_factory=lambda: ErpGrid(64))
    sun_radius_deg: float = 12.0
    sun_elevation_deg: tuple[float, float] = (15.0, 40.0)
    checker_size: float = 0.25
    checker_angle_deg: float = 30.0
    fog_distance: float = 5.0


@dataclass
class TrainSample:
    """A panorama in [0, 1], its label, and the rig that derives its views."""

    pano: np.ndarray
    y: int
    rig: CameraRig
    sun_theta: float = 0.0

    @cached_property
    def views(self) -> list[PerspImage]:
        return project_to_rig(self.pano, self.rig, "bilinear")


def sun_bucket(theta: float) -> int:
    return int(np.floor((theta + np.pi) / (2 * np.pi / N_BUCKETS))) % N_BUCKETS


def checker_value(x, y, size: float, angle_deg: float = 0.0):
    """True on light cells; the board is turned by ``angle_deg`` about the origin."""
    c, s = np.cos(np.radians(angle_deg)), np.sin(np.radians(angle_deg))
    a = c * x + s * y
    b = -s * x + c * y
    return (np.floor(a / size + 0.5) + np.floor(b / size + 0.5)) % 2 == 0


def render_scene(theta, phi, sun_theta: float, sun_phi: float, params: SynthParams) -> np.ndarray:
    """RGB (3, ...) radiance for directions given by azimuth/elevation arrays."""
    d = dirs_from_angles(theta, phi)
    up = np.clip(d[..., 2], 0.0, 1.0)[..., None]
    sky = SKY_HORIZON * (1 - up) + SKY_ZENITH * up

    down = d[..., 2] < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(down, -1.0 / d[..., 2], np.inf)
        fx, fy = d[..., 0] * t, d[..., 1] * t
        light = checker_value(np.where(down, fx, 0.0), np.where(down, fy, 0.0), params.checker_size, params.checker_angle_deg)
        fog = np.where(down, np.exp(-np.hypot(fx, fy) / params.fog_distance), 0.0)[..., None]
    floor = np.where(light[..., None], CHECK_LIGHT, CHECK_DARK)
    img = np.where(down[..., None], fog * floor + (1 - fog) * SKY_HORIZON, sky)

    s = dirs_from_angles(sun_theta, sun_phi)
    ang = np.arccos(np.clip(d @ s, -1.0, 1.0))
    r = np.radians(params.sun_radius_deg)
    bump = (np.clip(1 - (ang / r) ** 2, 0.0, 1.0) ** 2)[..., None]
    img = bump * SUN + (1 - bump) * img
    return np.moveaxis(img, -1, 0)


def synth_panorama(seed, params: SynthParams | None = None, rig: CameraRig | None = None) -> TrainSample:
    params = params or SynthParams()
    rig = rig or icosahedron_rig(params.grid.height // 2)
    rng = np.random.default_rng(seed)
    sun_theta = float(rng.uniform(-np.pi, np.pi))
    lo, hi = params.sun_elevation_deg
    sun_phi = float(np.radians(rng.uniform(lo, hi)))
    theta, phi = params.grid.pixel_angles()
    pano = render_scene(theta, phi, sun_theta, sun_phi, params)
    return TrainSample(pano, sun_bucket(sun_theta), rig, sun_theta)


def synth_dataset(count: int, seed: int = 0, params: SynthParams | None = None, rig=None) -> list[TrainSample]:
    seeds = np.random.SeedSequence(seed).spawn(count)
    return [synth_panorama(s, params, rig) for s in seeds]
