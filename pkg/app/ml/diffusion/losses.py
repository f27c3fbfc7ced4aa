from __future__ import annotations

import torch
from torch import nn

from app.core.errors import NonFiniteLoss
from app.core.schemas.diffusion import LossConfig
from app.ml.diffusion.schedule import DiffusionSchedule, forward_sample


def score_loss(
    net: nn.Module,
    m0: torch.Tensor,
    m_hat: torch.Tensor,
    spk: torch.Tensor,
    generator: torch.Generator,
    *,
    schedule: DiffusionSchedule | None = None,
    p_drop: float = 0.1,
    t: torch.Tensor | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """
    Per-element mean of (e_theta(M_t, t | M-hat, s) + eps)^2 over the batch.

    Draw order from `generator`: t, eps, content keep mask, speaker keep mask.
    Each condition is dropped independently with probability `p_drop`.
    Gradients flow into the coarse spectrogram, so its producer trains on L_d too.
    """
    schedule = schedule or DiffusionSchedule()
    b = m0.shape[0]
    if t is None:
        t = schedule.t_min + (1.0 - schedule.t_min) * torch.rand(b, generator=generator, dtype=m0.dtype)
    if noise is None:
        noise = torch.randn(m0.shape, generator=generator, dtype=m0.dtype)
    keep_content = torch.rand(b, generator=generator) >= p_drop
    keep_speaker = torch.rand(b, generator=generator) >= p_drop

    m_t = forward_sample(m0, m_hat, t, noise, schedule)
    pred = net(m_t, t, m_hat, spk, keep_content, keep_speaker)
    loss = ((pred + noise) ** 2).mean()
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"score loss is {float(loss)}")
    return loss


def total_loss(l_d, l_enc, cfg: LossConfig | None = None):
    """L_total = L_d + alpha * L_enc."""
    cfg = cfg or LossConfig()
    return l_d + cfg.alpha * l_enc
