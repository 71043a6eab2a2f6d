"""Linear-beta diffusion schedule and the forward (noising) process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    if T < 1:
        raise DomainError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise DomainError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def add_noise(schedule: NoiseSchedule, x0, t: int, eps):
    """``sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``; works on arrays and tensors."""
    if tuple(x0.shape) != tuple(eps.shape):
        raise ShapeError(f"x0 {tuple(x0.shape)} and noise {tuple(eps.shape)} differ")
    ab = float(schedule.alpha_bars[t])
    return ab**0.5 * x0 + (1.0 - ab) ** 0.5 * eps
