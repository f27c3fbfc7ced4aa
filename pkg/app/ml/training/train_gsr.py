from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from tqdm import tqdm

from app.core.errors import ConfigError, ShapeMismatch
from app.core.schemas.audio import MelConfig
from app.core.schemas.models import ResUNetConfig
from app.core.schemas.training import GsrLossConfig, OptimizerConfig
from app.ml.datasets.schema import ManifestRow
from app.ml.models.discriminator import MultiScaleSpectrogramDiscriminator
from app.ml.models.resunet import ResUNet
from app.ml.nn.checkpoint import save_checkpoint
from app.ml.nn.training import OptimizerState, train_step
from app.ml.signal.mel import MelSpectrogram
from app.ml.training.data import crop_start, epoch_batches, fit_frames, load_mel_pairs

logger = logging.getLogger(__name__)

GSR_LOG_COLUMNS = ["epoch", "mel_loss", "adv_loss", "fm_loss", "lr"]


def _tensor(x) -> torch.Tensor:
    if isinstance(x, MelSpectrogram):
        return torch.from_numpy(np.array(x.values))
    return x


def gsr_loss(
    pred,
    target,
    cfg: GsrLossConfig | None = None,
    discriminator: MultiScaleSpectrogramDiscriminator | None = None,
) -> dict[str, torch.Tensor]:
    """
    Named generator loss components plus `total`.

    mel: mean |pred - target|. With adversarial training enabled (a
    discriminator is then required): adv is the least-squares generator loss summed over
    scales, fm the L1 distance between discriminator activations on pred and
    (detached) target, averaged over layers.
    """
    cfg = cfg or GsrLossConfig()
    pred, target = _tensor(pred), _tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"gsr_loss shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")

    mel = (pred - target).abs().mean()
    zero = torch.zeros((), dtype=mel.dtype)
    adv, fm = zero, zero
    if cfg.adversarial_enabled:
        if discriminator is None:
            raise ConfigError("adversarial_enabled needs a discriminator")
        p, t = (pred[None], target[None]) if pred.ndim == 2 else (pred, target)
        fake = discriminator(p)
        with torch.no_grad():
            real = discriminator(t)
        adv = sum(((logits - 1.0) ** 2).mean() for logits, _ in fake)
        fm_terms = [
            F.l1_loss(f_fake, f_real.detach())
            for (_, feats_fake), (_, feats_real) in zip(fake, real)
            for f_fake, f_real in zip(feats_fake, feats_real)
        ]
        fm = sum(fm_terms) / len(fm_terms)

    total = cfg.mel_weight * mel + adv + cfg.fm_weight * fm
    return {"mel": mel, "adv": adv, "fm": fm, "total": total}


def discriminator_loss(
    discriminator: MultiScaleSpectrogramDiscriminator, pred: torch.Tensor, target: torch.Tensor
) -> torch.Tensor:
    """LSGAN: real -> 1, fake -> 0, summed over scales."""
    loss = torch.zeros(())
    for (real, _), (fake, _) in zip(discriminator(target), discriminator(pred.detach())):
        loss = loss + ((real - 1.0) ** 2).mean() + (fake**2).mean()
    return loss


def train_gsr(
    rows: Sequence[ManifestRow],
    model_cfg: ResUNetConfig | None = None,
    loss_cfg: GsrLossConfig | None = None,
    optimizer_cfg: OptimizerConfig | None = None,
    *,
    mel_config: MelConfig | None = None,
    seed: int = 0,
    segment_frames: int = 64,
    out_dir: str | Path | None = None,
    progress: bool = False,
) -> tuple[ResUNet, pd.DataFrame]:
    """
    Train the residual mel restorer on (degraded, clean) manifest pairs.

    Returns the model (eval mode) and the per-epoch log. With `out_dir`, writes
    gsr.ckpt and gsr_train_log.csv there.
    """
    model_cfg = model_cfg or ResUNetConfig()
    loss_cfg = loss_cfg or GsrLossConfig()
    optimizer_cfg = optimizer_cfg or OptimizerConfig.gsr_defaults()
    mel_config = mel_config or MelConfig()

    pairs = load_mel_pairs(rows, mel_config)

    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    model = ResUNet(model_cfg)
    state = OptimizerState.create(model.parameters(), optimizer_cfg)

    disc: MultiScaleSpectrogramDiscriminator | None = None
    disc_state: OptimizerState | None = None
    if loss_cfg.adversarial_enabled:
        disc = MultiScaleSpectrogramDiscriminator(loss_cfg.discriminator)
        disc_state = OptimizerState.create(disc.parameters(), optimizer_cfg)

    def make_batch(idx: list[int]) -> tuple[torch.Tensor, torch.Tensor]:
        xs, ys = [], []
        for i in idx:
            p = pairs[i]
            start = crop_start(p.clean.shape[0], segment_frames, gen)
            xs.append(fit_frames(p.degraded, start, segment_frames))
            ys.append(fit_frames(p.clean, start, segment_frames))
        return torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys))

    log_rows = []
    epochs = tqdm(range(optimizer_cfg.epochs), desc="gsr", disable=not progress)
    for epoch in epochs:
        sums = {"mel": 0.0, "adv": 0.0, "fm": 0.0}
        n_batches = 0
        lr = state.lr
        for idx in epoch_batches(len(pairs), optimizer_cfg.batch_size, gen):
            x, y = make_batch(idx)
            parts: dict[str, torch.Tensor] = {}

            def loss_fn(m, batch):
                comps = gsr_loss(m(batch[0]), batch[1], loss_cfg, disc)
                parts.update(comps)
                return comps["total"]

            if disc is not None:
                disc.requires_grad_(False)
            train_step(model, (x, y), loss_fn, state)

            if disc is not None and disc_state is not None:
                disc.requires_grad_(True)
                with torch.no_grad():
                    fake = model(x)
                train_step(disc, (fake, y), lambda d, b: discriminator_loss(d, b[0], b[1]), disc_state)

            for key in sums:
                sums[key] += float(parts[key].detach())
            n_batches += 1

        state.end_epoch()
        if disc_state is not None:
            disc_state.end_epoch()
        row = {
            "epoch": epoch,
            "mel_loss": sums["mel"] / n_batches,
            "adv_loss": sums["adv"] / n_batches,
            "fm_loss": sums["fm"] / n_batches,
            "lr": lr,
        }
        log_rows.append(row)
        epochs.set_postfix(mel=f"{row['mel_loss']:.4f}")
        logger.debug("gsr epoch %d: %s", epoch, row)

    model.eval()
    log = pd.DataFrame(log_rows, columns=GSR_LOG_COLUMNS)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(model, out / "gsr.ckpt", extra={"seed": seed, "epochs": optimizer_cfg.epochs})
        log.to_csv(out / "gsr_train_log.csv", index=False)
    logger.info("gsr training done: mel loss %.4f -> %.4f", log_rows[0]["mel_loss"], log_rows[-1]["mel_loss"])
    return model, log
