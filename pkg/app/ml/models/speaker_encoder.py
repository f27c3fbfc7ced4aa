from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from app.core.errors import ClipTooShort, EmptyEnrollment
from app.core.schemas.audio import MelConfig
from app.core.schemas.models import SpeakerEncoderConfig
from app.ml.nn.module import TrainableModule, init_weights
from app.ml.signal.audio import AudioClip
from app.ml.signal.mel import mel_spectrogram

LOGIT_SCALE = 10.0


@dataclass(frozen=True, eq=False)
class SpeakerEmbedding:
    vector: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError("speaker embedding must be a finite non-zero vector")
        v = v / norm
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return int(self.vector.size)

    def cosine(self, other: "SpeakerEmbedding") -> float:
        return float(np.clip(np.dot(self.vector, other.vector), -1.0, 1.0))

    def as_tensor(self) -> torch.Tensor:
        return torch.from_numpy(self.vector.astype(np.float32))


class SpeakerEncoder(TrainableModule):
    """
    Stand-in speaker encoder: per-band mean and std of the log-mel over time,
    a linear map and L2 normalisation. `classifier` is only used for training.
    """

    kind = "speaker_encoder"
    config_cls = SpeakerEncoderConfig

    def __init__(self, config: SpeakerEncoderConfig | None = None) -> None:
        config = config or SpeakerEncoderConfig()
        super().__init__(config)
        self.proj = nn.Linear(2 * config.n_mels, config.dim)
        self.classifier = nn.Linear(config.dim, config.n_speakers)
        init_weights(self)

    @staticmethod
    def pool(mel: torch.Tensor) -> torch.Tensor:
        """(B, T, n_mels) -> (B, 2 * n_mels) mean and population std over frames."""
        mean = mel.mean(dim=1)
        std = mel.std(dim=1, unbiased=False)
        return torch.cat([mean, std], dim=-1)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.proj(self.pool(mel)), dim=-1)

    def logits(self, mel: torch.Tensor) -> torch.Tensor:
        return LOGIT_SCALE * self.classifier(self(mel))


@torch.no_grad()
def embed_clip(clip: AudioClip, encoder: SpeakerEncoder, mel_config: MelConfig | None = None) -> np.ndarray:
    min_samples = int(round(encoder.config.min_seconds * clip.sample_rate))
    if len(clip) < min_samples:
        raise ClipTooShort(
            f"enrollment clip is {clip.duration:.3f} s; need >= {encoder.config.min_seconds} s"
        )
    mel = mel_spectrogram(clip, mel_config or MelConfig())
    encoder.eval()
    out = encoder(torch.from_numpy(mel.values)[None])[0]
    return out.double().cpu().numpy()


def speaker_embed(
    clips: Sequence[AudioClip], encoder: SpeakerEncoder, mel_config: MelConfig | None = None
) -> SpeakerEmbedding:
    """Average of per-clip unit embeddings, renormalised."""
    if not clips:
        raise EmptyEnrollment("speaker enrollment needs at least one clip")
    vectors = np.stack([embed_clip(c, encoder, mel_config) for c in clips])
    return SpeakerEmbedding(vectors.mean(axis=0))
