"""Deterministic DDIM sampling through both branches with loop-closure operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import DomainError
from ..resample import (
    PerspImage,
    circular_pad,
    crop_pad,
    independent_noise_init,
    joint_index_map,
    joint_noise_init,
    latent_roll,
    rig_for_turns,
    view_intrinsics,
)
from .model import ToyDenoiser
from .schedule import NoiseSchedule, make_schedule

ROTATION_POLICIES = ("lockstep", "none")
DECODE_PAD = 2


@dataclass(frozen=True)
class SamplerConfig:
    """DDIM settings.

    ``rotation="lockstep"`` rolls the panorama latent one quarter turn after
    every step, yaws the rig with it, and undoes the accumulated roll once at
    the end. ``cond_shift_per_turn`` rotates an azimuth-valued condition label
    in lockstep as well (2 for the 8 sun buckets of the synthetic set).
    """

    steps: int = 50
    eta: float = 0.0
    rotation: str = "lockstep"
    decode_pad: bool = True
    seed: int = 0
    joint_init: bool = True
    cond_shift_per_turn: int = 2

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("DDIM needs at least one step")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta={self.eta} outside [0, 1]")
        if self.rotation not in ROTATION_POLICIES:
            raise DomainError(f"unknown rotation policy {self.rotation!r}")


@dataclass
class SampleResult:
    pano: np.ndarray  # (3, H, W) in [0, 1]
    views: list[PerspImage]  # final view estimates in [0, 1], with the poses that produced them
    latent: np.ndarray  # un-clipped panorama latent in model space


def ddim_timesteps(T: int, steps: int) -> np.ndarray:
    return np.round(np.linspace(T - 1, 0, steps)).astype(np.int64)


def decode(latent):
    """Toy decoder: identity, run on a circularly padded latent and cropped back."""
    return crop_pad(circular_pad(latent, DECODE_PAD), DECODE_PAD)


@torch.no_grad()
def ddim_sample(
    model: ToyDenoiser, sampler: SamplerConfig, y: int, schedule: NoiseSchedule | None = None
) -> SampleResult:
    schedule = schedule or make_schedule()
    cfg = model.config
    dtype = next(model.parameters()).dtype
    rig0 = model.rig
    C = cfg.image_channels
    init = joint_noise_init if sampler.joint_init else independent_noise_init
    pano, views = init(cfg.grid, rig0, sampler.seed, channels=C)
    zp = torch.as_tensor(pano, dtype=dtype)
    zv = torch.as_tensor(np.stack(views), dtype=dtype)
    noise_rng = np.random.default_rng([sampler.seed, 1])

    ts = ddim_timesteps(schedule.T, sampler.steps)
    abar = schedule.alpha_bars
    turns = 0
    for i, t in enumerate(ts):
        rig = rig_for_turns(rig0, turns)
        label = (y + turns * sampler.cond_shift_per_turn) % cfg.n_classes
        eps_p, eps_v = model(zp, zv, int(t), label, rig)
        ab = float(abar[t])
        ab_prev = float(abar[ts[i + 1]]) if i + 1 < len(ts) else 1.0
        x0_p = (zp - (1 - ab) ** 0.5 * eps_p) / ab**0.5
        x0_v = (zv - (1 - ab) ** 0.5 * eps_v) / ab**0.5
        sigma = sampler.eta * ((1 - ab_prev) / (1 - ab)) ** 0.5 * (1 - ab / ab_prev) ** 0.5
        dir_scale = max(1 - ab_prev - sigma**2, 0.0) ** 0.5
        zp = ab_prev**0.5 * x0_p + dir_scale * eps_p
        zv = ab_prev**0.5 * x0_v + dir_scale * eps_v
        if sigma > 0:
            n_p, n_v = _step_noise(model, rig, noise_rng, sampler.joint_init)
            zp = zp + sigma * torch.as_tensor(n_p, dtype=dtype)
            zv = zv + sigma * torch.as_tensor(n_v, dtype=dtype)
        if sampler.rotation == "lockstep":
            zp = latent_roll(zp, 1)
            turns += 1
    zp = latent_roll(zp, -turns)
    latent = zp.double().numpy()
    out = decode(latent) if sampler.decode_pad else latent
    final_rig = rig_for_turns(rig0, turns)
    K = view_intrinsics(cfg.grid, final_rig)
    view_imgs = [
        PerspImage(np.clip((zv[i].double().numpy() + 1) / 2, 0, 1), pose, K) for i, pose in enumerate(final_rig.poses)
    ]
    return SampleResult(np.clip((out + 1) / 2, 0, 1), view_imgs, latent)


def _step_noise(model, rig, rng, joint):
    cfg = model.config
    C, H = cfg.image_channels, cfg.height
    n_p = rng.standard_normal((C, H, 2 * H))
    if joint:
        idx = joint_index_map(cfg.grid, rig)
        n_v = np.ascontiguousarray(n_p.reshape(C, -1)[:, idx].transpose(1, 0, 2, 3))
    else:
        n_v = rng.standard_normal((len(rig), C, cfg.view_size, cfg.view_size))
    return n_p, n_v
