from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import torch

from app.core.errors import EmptyManifest, LengthMismatch
from app.core.schemas.audio import MelConfig
from app.ml.datasets.schema import ManifestRow
from app.ml.signal.audio import read_wav
from app.ml.signal.mel import mel_spectrogram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MelPair:
    utterance_id: str
    degraded: np.ndarray
    clean: np.ndarray


def load_mel_pairs(rows: Sequence[ManifestRow], mel_config: MelConfig) -> list[MelPair]:
    """(degraded, clean) log-mels for every row; rows without a degraded clip are an error."""
    if not rows:
        raise EmptyManifest("training manifest is empty")
    pairs = []
    for row in rows:
        if not row.degraded_path:
            raise EmptyManifest(f"row {row.utterance_id} has no degraded_path")
        clean = read_wav(row.clean_path)
        degraded = read_wav(row.degraded_path)
        if len(clean) != len(degraded):
            raise LengthMismatch(
                f"{row.utterance_id}: clean has {len(clean)} samples, degraded {len(degraded)}"
            )
        pairs.append(
            MelPair(
                utterance_id=row.utterance_id,
                degraded=mel_spectrogram(degraded, mel_config).values,
                clean=mel_spectrogram(clean, mel_config).values,
            )
        )
    logger.info("loaded %d (degraded, clean) mel pairs", len(pairs))
    return pairs


def crop_start(n_frames: int, segment: int, generator: torch.Generator) -> int:
    if n_frames <= segment:
        return 0
    return int(torch.randint(0, n_frames - segment + 1, (1,), generator=generator))


def fit_frames(x: np.ndarray, start: int, segment: int) -> np.ndarray:
    """Rows [start, start + segment), edge-padded along time when the input is short."""
    out = x[start : start + segment]
    if out.shape[0] < segment:
        pad = [(0, segment - out.shape[0])] + [(0, 0)] * (x.ndim - 1)
        out = np.pad(out, pad, mode="edge")
    return out


def epoch_batches(n: int, batch_size: int, generator: torch.Generator) -> Iterator[list[int]]:
    """Shuffled index batches; the last batch may be short."""
    order = torch.randperm(n, generator=generator).tolist()
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]
