from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ScheduleConfig(BaseModel):
    """Linear-beta variance-preserving schedule on t in [0, 1]."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    beta_0: float = Field(default=0.05, gt=0.0)
    beta_1: float = Field(default=20.0, gt=0.0)
    t_min: float = Field(default=1e-4, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _increasing(self) -> "ScheduleConfig":
        if self.beta_1 < self.beta_0:
            raise ValueError("beta_1 must be >= beta_0")
        return self


class GuidanceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    speaker_scale: float = Field(default=0.25, allow_inf_nan=False)
    content_scale: float = Field(default=1.0, allow_inf_nan=False)
    n_steps: int = Field(default=30, ge=1)
    train_dropout: float = Field(default=0.1, ge=0.0, le=1.0)


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.5, ge=0.0, description="weight on the content-encoder L1 loss")
