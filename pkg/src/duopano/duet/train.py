"""Combined dual-branch loss and the toy SGD training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..errors import DomainError, TrainingError
from ..resample import joint_index_map, project_to_rig
from ..sphere import CameraPose, CameraRig
from .model import ToyConfig, ToyDenoiser
from .schedule import NoiseSchedule, add_noise, make_schedule
from .synth import TrainSample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    model: ToyConfig = field(default_factory=ToyConfig)
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 0
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    joint_noise: bool = True
    randomize_poses: bool = False


@dataclass
class TrainResult:
    model: ToyDenoiser
    losses: np.ndarray


class _Prepared:
    """A training sample as tensors in model space ([-1, 1])."""

    def __init__(self, sample: TrainSample, rig: CameraRig, dtype):
        self.y = sample.y
        self.pano = torch.as_tensor(sample.pano * 2 - 1, dtype=dtype)
        views = sample.views if rig is sample.rig else project_to_rig(sample.pano, rig)
        self.views = torch.as_tensor(np.stack([v.data for v in views]) * 2 - 1, dtype=dtype)
        self.source = sample


def draw_noise(model: ToyDenoiser, rig: CameraRig, rng: np.random.Generator, joint: bool, dtype):
    """Panorama noise and view noise, the latter nearest-projected when ``joint``."""
    cfg = model.config
    C, H, W = cfg.image_channels, cfg.height, 2 * cfg.height
    s = cfg.view_size
    eps_pano = rng.standard_normal((C, H, W))
    if joint:
        idx = joint_index_map(cfg.grid, rig)
        eps_views = eps_pano.reshape(C, H * W)[:, idx].transpose(1, 0, 2, 3)
    else:
        eps_views = rng.standard_normal((len(rig), C, s, s))
    return torch.as_tensor(eps_pano, dtype=dtype), torch.as_tensor(np.ascontiguousarray(eps_views), dtype=dtype)


def combined_loss(
    model: ToyDenoiser,
    sample,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    joint: bool = True,
    rig: CameraRig | None = None,
    t: int | None = None,
) -> torch.Tensor:
    """``L* + (1/N) sum_i L^i`` with per-element mean squared noise error per branch.

    ``sample`` is a :class:`TrainSample` or an already prepared one. The
    timestep is drawn uniformly from ``rng`` unless given.
    """
    dtype = next(model.parameters()).dtype
    rig = rig or model.rig
    prep = sample if isinstance(sample, _Prepared) else _Prepared(sample, rig, dtype)
    if t is None:
        t = int(rng.integers(0, schedule.T))
    eps_pano, eps_views = draw_noise(model, rig, rng, joint, dtype)
    zp = add_noise(schedule, prep.pano, t, eps_pano)
    zv = add_noise(schedule, prep.views, t, eps_views)
    pred_pano, pred_views = model(zp, zv, t, prep.y, rig)
    loss_pano = ((eps_pano - pred_pano) ** 2).mean()
    loss_views = ((eps_views - pred_views) ** 2).mean(dim=(1, 2, 3))
    return loss_pano + loss_views.sum() / len(rig)


def random_rig(base: CameraRig, rng: np.random.Generator) -> CameraRig:
    """``base`` under a uniformly random global rotation."""
    Q = Rotation.random(random_state=rng).as_matrix()
    return CameraRig(tuple(CameraPose(p.rotation @ Q.T) for p in base.poses), base.intrinsics)


def smoothed(losses, window: int = 100) -> np.ndarray:
    """Trailing moving average (shorter window at the start)."""
    losses = np.asarray(losses, dtype=np.float64)
    c = np.cumsum(np.insert(losses, 0, 0.0))
    idx = np.arange(1, len(losses) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def train_toy(config: TrainConfig, dataset, steps: int | None = None, log_every: int = 0) -> TrainResult:
    """Plain SGD (fixed learning rate, no momentum); deterministic given ``config.seed``."""
    if not dataset:
        raise DomainError("dataset is empty")
    steps = config.steps if steps is None else steps
    torch.set_num_threads(1)
    model = ToyDenoiser(config.model, seed=config.seed)
    schedule = make_schedule(config.T, config.beta_start, config.beta_end)
    rng = np.random.default_rng(config.seed)
    dtype = next(model.parameters()).dtype
    prepared = [_Prepared(s, model.rig, dtype) for s in dataset] if not config.randomize_poses else None
    opt = torch.optim.SGD(model.parameters(), lr=config.lr, momentum=0.0)
    losses = np.empty(steps)
    for step in range(steps):
        i = int(rng.integers(0, len(dataset)))
        if config.randomize_poses:
            rig = random_rig(model.rig, rng)
            sample = _Prepared(dataset[i], rig, dtype)
            model._geometry.clear()
        else:
            rig, sample = model.rig, prepared[i]
        loss = combined_loss(model, sample, schedule, rng, config.joint_noise, rig)
        value = float(loss.detach())
        if not np.isfinite(value):
            raise TrainingError("loss diverged", step=step)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        losses[step] = value
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.4f (smoothed %.4f)", step + 1, value, smoothed(losses[: step + 1])[-1])
    if config.randomize_poses:
        model._geometry.clear()
    return TrainResult(model, losses)
