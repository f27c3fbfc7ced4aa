from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

SAMPLE_RATE = 16000


class MelConfig(BaseModel):
    """Shared analysis settings for every stage (GSR, VC, vocoder, metrics)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_rate: int = Field(default=SAMPLE_RATE, description="Hz; fixed at 16 kHz")
    win_length: int = Field(default=1024, ge=1)
    hop_length: int = Field(default=256, ge=1)
    n_fft: int = Field(default=1024, ge=2)
    n_mels: int = Field(default=80, ge=1)
    fmin: float = Field(default=0.0, ge=0.0)
    fmax: float = Field(default=8000.0, gt=0.0)
    log_floor: float = Field(default=1e-5, gt=0.0, description="epsilon, linear amplitude floor")

    @model_validator(mode="after")
    def _check_geometry(self) -> "MelConfig":
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if not (self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError("require hop_length <= win_length <= n_fft")
        if self.fmax > self.sample_rate / 2:
            raise ValueError("fmax must not exceed Nyquist")
        if self.fmin >= self.fmax:
            raise ValueError("fmin must be below fmax")
        return self

    @property
    def n_freqs(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def log_min(self) -> float:
        return math.log(self.log_floor)

    def frame_count(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop_length


class VocoderConfig(BaseModel):
    """Griffin-Lim synthesis settings (the vocoder descriptor stored in model bundles)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["griffin_lim"] = "griffin_lim"
    iterations: int = Field(default=64, ge=1)
    seed: int = Field(default=0, ge=0)
    inversion: Literal["transpose", "pinv", "nnls"] = "transpose"
