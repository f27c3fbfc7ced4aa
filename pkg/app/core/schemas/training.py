from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["adamw", "adam"] = "adamw"
    learning_rate: float = Field(default=2e-4, gt=0.0)
    decay_gamma: float | None = Field(
        default=0.999, gt=0.0, le=1.0, description="per-epoch exponential LR decay; None disables"
    )
    batch_size: int = Field(default=32, ge=1)
    epochs: int = Field(default=100, ge=1)
    weight_decay: float = Field(default=0.01, ge=0.0, description="AdamW only")
    grad_clip: float | None = Field(default=None, gt=0.0)

    @classmethod
    def gsr_defaults(cls) -> "OptimizerConfig":
        return cls(kind="adamw", learning_rate=2e-4, decay_gamma=0.999, batch_size=32, epochs=100)

    @classmethod
    def vc_defaults(cls) -> "OptimizerConfig":
        return cls(kind="adam", learning_rate=1e-4, decay_gamma=None, batch_size=16, epochs=100)


class DiscriminatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scales: int = Field(default=3, ge=1, description="time downsampling by 1, 1/2, 1/4 ...")
    channels: int = Field(default=16, ge=1)
    layers: int = Field(default=3, ge=1)


class GsrLossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mel_weight: float = Field(default=45.0, gt=0.0)
    adversarial_enabled: bool = False
    fm_weight: float = Field(default=2.0, ge=0.0)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
