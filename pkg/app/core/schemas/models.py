from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class ResUNetConfig(BaseModel):
    """GSR restoration network over (frames, n_mels) log-mel images."""

    model_config = ConfigDict(extra="forbid")

    n_mels: int = Field(default=80, ge=1)
    depth: int = Field(default=4, ge=1, description="downsampling stages")
    base_channels: int = Field(default=16, ge=1)
    max_channels: int = Field(default=256, ge=1)
    blocks_per_stage: int = Field(default=2, ge=1)

    @property
    def multiple(self) -> int:
        return 2**self.depth

    def channels(self, stage: int) -> int:
        return min(self.base_channels * 2**stage, self.max_channels)


class ContentEncoderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_units: int = Field(default=100, ge=1, description="codebook size K")
    n_mels: int = Field(default=80, ge=1)
    dim: int = Field(default=192, ge=1)
    conv_layers: int = Field(default=3, ge=0)
    kernel_size: int = Field(default=5, ge=1)
    transformer_layers: int = Field(default=6, ge=0)
    heads: int = Field(default=4, ge=1)
    ff_mult: int = Field(default=4, ge=1)
    positional_encoding: Literal["conv", "sinusoidal"] = "conv"
    output_bias: float = Field(default=-5.0, description="initial projection bias, roughly the mean log-mel")


class SpeakerEncoderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_mels: int = Field(default=80, ge=1)
    dim: int = Field(default=192, ge=1)
    n_speakers: int = Field(default=4, ge=1, description="classifier head size used for training")
    min_seconds: float = Field(default=0.5, gt=0.0)


class ScoreNetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_mels: int = Field(default=80, ge=1)
    base_channels: int = Field(default=32, ge=1)
    levels: int = Field(default=3, ge=1, description="resolutions; channels double per level")
    blocks_per_level: int = Field(default=2, ge=1)
    time_dim: int = Field(default=128, ge=2)
    speaker_dim: int = Field(default=192, ge=1)
    attention_heads: int = Field(default=4, ge=1)

    @property
    def multiple(self) -> int:
        return 2 ** (self.levels - 1)


class ProjectionConfig(BaseModel):
    """Linear mel -> coarse-spectrogram map used by the mel-conditioned VC variant."""

    model_config = ConfigDict(extra="forbid")

    n_mels: int = Field(default=80, ge=1)
