from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from torch import nn

from app.core.errors import NonFiniteState, ShapeMismatch
from app.core.schemas.audio import MelConfig
from app.core.schemas.diffusion import GuidanceConfig
from app.ml.diffusion.guidance import guided_score
from app.ml.diffusion.schedule import DiffusionSchedule
from app.ml.nn.checkpoint import write_container
from app.ml.signal.mel import MelSpectrogram

logger = logging.getLogger(__name__)


def _as_batch(x, dims: int) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        t = x
    else:
        t = torch.from_numpy(np.asarray(getattr(x, "values", getattr(x, "vector", x))))
    t = t.float()
    return t[None] if t.ndim == dims - 1 else t


@torch.no_grad()
def reverse_trajectory(
    net: nn.Module,
    m_hat: torch.Tensor,
    spk: torch.Tensor,
    g: GuidanceConfig,
    seed: int,
    *,
    schedule: DiffusionSchedule | None = None,
    keep_trace: bool = False,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """
    Euler-Maruyama on the reverse SDE from X_1 = M-hat + z.

    Step i evaluates drift and score at t_i = 1 - (i + 1/2) / N:
        X <- X - beta(t_i) h [ (M-hat - X) / 2 - score ] + sqrt(beta(t_i) h) z_i
    with score = -e / sigma(t_i). The last step adds no noise.
    """
    schedule = schedule or DiffusionSchedule()
    if hasattr(net, "eval"):
        net.eval()
    gen = torch.Generator().manual_seed(int(seed))
    n = g.n_steps
    h = 1.0 / n

    x = m_hat + torch.randn(m_hat.shape, generator=gen, dtype=m_hat.dtype)
    trace = [x.clone()] if keep_trace else []
    for i in range(n):
        t = 1.0 - (i + 0.5) * h
        t_vec = torch.full((m_hat.shape[0],), t, dtype=m_hat.dtype)
        beta = schedule.beta(t)
        sigma = float(schedule.noise_std(np.float64(t)))

        e = guided_score(net, x, t_vec, m_hat, spk, g)
        score = -e / sigma
        x = x - beta * h * (0.5 * (m_hat - x) - score)
        if i < n - 1:
            x = x + (beta * h) ** 0.5 * torch.randn(m_hat.shape, generator=gen, dtype=m_hat.dtype)

        if not torch.isfinite(x).all():
            raise NonFiniteState(f"reverse sampler diverged at step {i} (t={t:.4f})")
        if keep_trace:
            trace.append(x.clone())
    return x, trace


def reverse_sample(
    net: nn.Module,
    m_hat,
    spk,
    g: GuidanceConfig,
    seed: int,
    *,
    schedule: DiffusionSchedule | None = None,
    mel_config: MelConfig | None = None,
    trace_path: str | Path | None = None,
) -> MelSpectrogram:
    """Sample one restored log-mel for a (T, n_mels) coarse spectrogram and a speaker vector."""
    m_hat_t = _as_batch(m_hat, 3)
    spk_t = _as_batch(spk, 2)
    if m_hat_t.shape[0] != 1 or spk_t.shape[0] != 1:
        raise ShapeMismatch("reverse_sample takes a single utterance")

    x, trace = reverse_trajectory(
        net, m_hat_t, spk_t, g, seed, schedule=schedule, keep_trace=trace_path is not None
    )
    if trace_path is not None:
        tensors = {f"step_{i:03d}": s[0].numpy() for i, s in enumerate(trace)}
        write_container(
            trace_path,
            tensors,
            kind="sampler_trace",
            config={"n_steps": g.n_steps, "seed": int(seed)},
        )
        logger.info("wrote sampler trace (%d states) -> %s", len(trace), trace_path)
    return MelSpectrogram.floored(x[0].numpy(), mel_config or MelConfig())
