from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from app.core.schemas.audio import VocoderConfig
from app.ml.signal.audio import AudioClip
from app.ml.signal.mel import MelSpectrogram, griffin_lim


class Vocoder(Protocol):
    def __call__(self, mel: MelSpectrogram, length: int | None = None) -> AudioClip: ...


@dataclass(frozen=True)
class GriffinLimVocoder:
    config: VocoderConfig = field(default_factory=VocoderConfig)

    def __call__(self, mel: MelSpectrogram, length: int | None = None) -> AudioClip:
        return griffin_lim(
            mel,
            iterations=self.config.iterations,
            seed=self.config.seed,
            method=self.config.inversion,
            length=length,
        )


def build_vocoder(config: VocoderConfig | None = None) -> Vocoder:
    return GriffinLimVocoder(config or VocoderConfig())
