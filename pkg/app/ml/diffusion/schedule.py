from __future__ import annotations

from dataclasses import dataclass
from typing import TypeVar

import numpy as np
import torch

from app.core.errors import ShapeMismatch, TimeOutOfRange
from app.core.schemas.diffusion import ScheduleConfig

ArrayT = TypeVar("ArrayT", float, np.ndarray, torch.Tensor)


@dataclass(frozen=True)
class DiffusionSchedule:
    """
    Variance-preserving schedule with a data-dependent prior mean.

    beta(t) = beta_0 + (beta_1 - beta_0) t, B(t) = int_0^t beta,
    a(t) = exp(-B/2), sigma(t) = sqrt(1 - exp(-B)).
    """

    beta_0: float = 0.05
    beta_1: float = 20.0
    t_min: float = 1e-4

    @classmethod
    def from_config(cls, cfg: ScheduleConfig | None = None) -> "DiffusionSchedule":
        cfg = cfg or ScheduleConfig()
        return cls(beta_0=cfg.beta_0, beta_1=cfg.beta_1, t_min=cfg.t_min)

    def beta(self, t: ArrayT) -> ArrayT:
        return self.beta_0 + (self.beta_1 - self.beta_0) * t

    def cumulative(self, t: ArrayT) -> ArrayT:
        return self.beta_0 * t + 0.5 * (self.beta_1 - self.beta_0) * t * t

    def mean_coef(self, t: ArrayT) -> ArrayT:
        b = self.cumulative(t)
        if isinstance(b, torch.Tensor):
            return torch.exp(-0.5 * b)
        return np.exp(-0.5 * b)

    def noise_std(self, t: ArrayT) -> ArrayT:
        b = self.cumulative(t)
        if isinstance(b, torch.Tensor):
            return torch.sqrt(-torch.expm1(-b))
        return np.sqrt(-np.expm1(-b))


def _check_time(t) -> None:
    arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise TimeOutOfRange(f"diffusion time must lie in [0, 1], got {arr}")


def forward_sample(m0, m_hat, t, noise, schedule: DiffusionSchedule | None = None):
    """
    M_t = a(t) M_0 + (1 - a(t)) M-hat + sigma(t) noise.

    Equal to M-hat + a (M_0 - M-hat) + sigma noise, arranged so that t = 0
    returns M_0 exactly. Works on numpy arrays (scalar t) and on batched
    tensors (t of shape (B,) broadcast over the trailing axes).
    """
    schedule = schedule or DiffusionSchedule()
    _check_time(t)
    if tuple(m0.shape) != tuple(m_hat.shape) or tuple(m0.shape) != tuple(noise.shape):
        raise ShapeMismatch(
            f"forward_sample shapes differ: {tuple(m0.shape)}, {tuple(m_hat.shape)}, {tuple(noise.shape)}"
        )
    if isinstance(m0, torch.Tensor):
        t = torch.as_tensor(t, dtype=m0.dtype, device=m0.device)
        if t.ndim == 1:
            t = t.reshape(-1, *([1] * (m0.ndim - 1)))
    a = schedule.mean_coef(t)
    s = schedule.noise_std(t)
    return a * m0 + (1 - a) * m_hat + s * noise
