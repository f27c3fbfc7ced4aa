from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from tqdm import tqdm

from app.core.errors import EmptyManifest
from app.core.schemas.audio import MelConfig
from app.core.schemas.models import SpeakerEncoderConfig
from app.core.schemas.training import OptimizerConfig
from app.ml.datasets.schema import ManifestRow
from app.ml.models.speaker_encoder import SpeakerEncoder
from app.ml.nn.checkpoint import save_checkpoint
from app.ml.nn.training import OptimizerState, train_step
from app.ml.signal.audio import read_wav
from app.ml.signal.mel import mel_spectrogram
from app.ml.training.data import crop_start, epoch_batches, fit_frames

logger = logging.getLogger(__name__)

SPEAKER_LOG_COLUMNS = ["epoch", "ce_loss", "accuracy", "lr"]


def train_speaker_encoder(
    rows: Sequence[ManifestRow],
    cfg: SpeakerEncoderConfig | None = None,
    optimizer_cfg: OptimizerConfig | None = None,
    *,
    mel_config: MelConfig | None = None,
    seed: int = 0,
    segment_frames: int = 64,
    out_dir: str | Path | None = None,
    progress: bool = False,
) -> tuple[SpeakerEncoder, pd.DataFrame]:
    """Cross-entropy speaker classification on clean clips; the embedding is taken before the head."""
    if not rows:
        raise EmptyManifest("speaker training manifest is empty")
    mel_config = mel_config or MelConfig()
    optimizer_cfg = optimizer_cfg or OptimizerConfig(
        kind="adam", learning_rate=1e-3, decay_gamma=None, batch_size=16, epochs=50
    )
    speakers = sorted({r.speaker_id for r in rows})
    label = {s: i for i, s in enumerate(speakers)}
    cfg = (cfg or SpeakerEncoderConfig()).model_copy(update={"n_speakers": len(speakers)})

    mels = [mel_spectrogram(read_wav(r.clean_path), mel_config).values for r in rows]
    labels = [label[r.speaker_id] for r in rows]

    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    encoder = SpeakerEncoder(cfg)
    state = OptimizerState.create(encoder.parameters(), optimizer_cfg)

    log_rows = []
    for epoch in tqdm(range(optimizer_cfg.epochs), desc="speaker", disable=not progress):
        lr = state.lr
        losses, correct = [], 0
        for idx in epoch_batches(len(mels), optimizer_cfg.batch_size, gen):
            xs = []
            for i in idx:
                start = crop_start(mels[i].shape[0], segment_frames, gen)
                xs.append(fit_frames(mels[i], start, segment_frames))
            x = torch.from_numpy(np.stack(xs))
            y = torch.tensor([labels[i] for i in idx])
            hits: list[int] = []

            def loss_fn(m, batch):
                logits = m.logits(batch[0])
                hits.append(int((logits.argmax(dim=-1) == batch[1]).sum()))
                return F.cross_entropy(logits, batch[1])

            value, state = train_step(encoder, (x, y), loss_fn, state)
            losses.append(value)
            correct += hits[0]
        state.end_epoch()
        log_rows.append(
            {"epoch": epoch, "ce_loss": float(np.mean(losses)), "accuracy": correct / len(mels), "lr": lr}
        )

    encoder.eval()
    log = pd.DataFrame(log_rows, columns=SPEAKER_LOG_COLUMNS)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(encoder, out / "speaker_encoder.ckpt", extra={"speakers": speakers, "seed": seed})
        log.to_csv(out / "speaker_train_log.csv", index=False)
    logger.info("speaker encoder: %d speakers, final accuracy %.3f", len(speakers), log_rows[-1]["accuracy"])
    return encoder, log
