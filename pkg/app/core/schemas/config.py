from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.schemas.audio import MelConfig, VocoderConfig
from app.core.schemas.degradation import DegradeConfig
from app.core.schemas.diffusion import GuidanceConfig, LossConfig, ScheduleConfig
from app.core.schemas.models import (
    ContentEncoderConfig,
    ResUNetConfig,
    ScoreNetConfig,
    SpeakerEncoderConfig,
)
from app.core.schemas.training import GsrLossConfig, OptimizerConfig

MetricName = Literal["lsd", "si_sdr", "mel_l1", "speaker_cosine"]


class GsrSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ResUNetConfig = Field(default_factory=lambda: ResUNetConfig(depth=3, base_channels=16, max_channels=64))
    loss: GsrLossConfig = Field(default_factory=GsrLossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig.gsr_defaults)
    segment_frames: int = Field(default=64, ge=8)


class ConditioningSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    codebook_k: int = Field(default=100, ge=2, description="content units K (2000 at full scale)")
    feature_kind: Literal["mfcc13"] = "mfcc13"
    content_encoder: ContentEncoderConfig = Field(
        default_factory=lambda: ContentEncoderConfig(n_units=100, dim=64, transformer_layers=2)
    )
    speaker_encoder: SpeakerEncoderConfig = Field(default_factory=lambda: SpeakerEncoderConfig(dim=64))
    speaker_optimizer: OptimizerConfig = Field(
        default_factory=lambda: OptimizerConfig(kind="adam", learning_rate=1e-3, decay_gamma=None, batch_size=16, epochs=50)
    )
    segment_frames: int = Field(default=64, ge=8)


class DiffusionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    score_net: ScoreNetConfig = Field(
        default_factory=lambda: ScoreNetConfig(base_channels=16, levels=2, time_dim=64, speaker_dim=64)
    )
    loss: LossConfig = Field(default_factory=LossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig.vc_defaults)
    segment_frames: int = Field(default=64, ge=8)
    handoff: Literal["waveform", "mel"] = Field(
        default="waveform", description="how GSR output reaches the VC stage in gsr+vc"
    )


class EvalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    metrics: list[MetricName] = Field(default_factory=lambda: ["lsd", "si_sdr", "mel_l1"])
    dump_mels: bool = False
    external_scores: str | None = Field(default=None, description="CSV of utterance_id, metric, value")


class SeedSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    global_seed: int = Field(default=0, ge=0)


class RunConfig(BaseModel):
    """One JSON document configuring every stage. Unknown keys anywhere are rejected."""

    model_config = ConfigDict(extra="forbid")

    preset: Literal["desk", "full"] = "desk"
    mel: MelConfig = Field(default_factory=MelConfig)
    degrade: DegradeConfig = Field(default_factory=DegradeConfig)
    gsr: GsrSection = Field(default_factory=GsrSection)
    conditioning: ConditioningSection = Field(default_factory=ConditioningSection)
    diffusion: DiffusionSection = Field(default_factory=DiffusionSection)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    vocoder: VocoderConfig = Field(default_factory=VocoderConfig)
    eval: EvalSection = Field(default_factory=EvalSection)
    seeds: SeedSection = Field(default_factory=SeedSection)

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        n_mels = self.mel.n_mels
        for name, value in (
            ("gsr.model.n_mels", self.gsr.model.n_mels),
            ("conditioning.content_encoder.n_mels", self.conditioning.content_encoder.n_mels),
            ("conditioning.speaker_encoder.n_mels", self.conditioning.speaker_encoder.n_mels),
            ("diffusion.score_net.n_mels", self.diffusion.score_net.n_mels),
        ):
            if value != n_mels:
                raise ValueError(f"{name}={value} does not match mel.n_mels={n_mels}")
        if self.diffusion.score_net.speaker_dim != self.conditioning.speaker_encoder.dim:
            raise ValueError("diffusion.score_net.speaker_dim must equal conditioning.speaker_encoder.dim")
        if self.conditioning.content_encoder.n_units != self.conditioning.codebook_k:
            raise ValueError("conditioning.content_encoder.n_units must equal conditioning.codebook_k")
        return self

    @classmethod
    def desk(cls) -> "RunConfig":
        return cls()

    @classmethod
    def full(cls) -> "RunConfig":
        """Full-scale widths; far too slow for CPU tests."""
        return cls(
            preset="full",
            gsr=GsrSection(model=ResUNetConfig(depth=4, base_channels=32, max_channels=512), segment_frames=128),
            conditioning=ConditioningSection(
                codebook_k=2000,
                content_encoder=ContentEncoderConfig(n_units=2000, dim=192, transformer_layers=6),
                speaker_encoder=SpeakerEncoderConfig(dim=192),
                segment_frames=128,
            ),
            diffusion=DiffusionSection(
                score_net=ScoreNetConfig(base_channels=64, levels=3, time_dim=128, speaker_dim=192),
                segment_frames=128,
            ),
        )

    @classmethod
    def load(cls, path: str | Path | None = None, preset: str | None = None) -> "RunConfig":
        """
        Build from a preset, then overlay a JSON file. A `preset` key inside the
        file selects the base when no preset is given explicitly.
        """
        data: dict[str, Any] = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise FileNotFoundError(f"Config file not found: {p}")
            data = json.loads(p.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise ValueError(f"{p}: config must be a JSON object")
        name = preset or data.get("preset", "desk")
        if name not in ("desk", "full"):
            raise ValueError(f"unknown preset {name!r}; choose desk or full")
        base = (cls.full() if name == "full" else cls.desk()).model_dump(mode="json")
        return cls.model_validate(_deep_merge(base, {**data, "preset": name}))

    def snapshot(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out
