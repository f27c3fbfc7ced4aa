from __future__ import annotations

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from app.core.schemas.audio import MelConfig, VocoderConfig
from app.core.schemas.diffusion import GuidanceConfig, ScheduleConfig

BUNDLE_FORMAT_VERSION = 1


class EnhanceMode(str, Enum):
    GSR = "gsr"
    VC_MEL = "vc-mel"
    VC_SSL = "vc-ssl"
    GSR_VC = "gsr+vc"

    @property
    def label(self) -> str:
        return {"gsr": "GSR", "vc-mel": "VC (Mel)", "vc-ssl": "VC (SSL)", "gsr+vc": "GSR+VC"}[self.value]


# component names -> modes that need them
REQUIRED_COMPONENTS: dict[EnhanceMode, tuple[str, ...]] = {
    EnhanceMode.GSR: ("gsr",),
    EnhanceMode.VC_MEL: ("mel_projection", "mel_score_net", "speaker_encoder"),
    EnhanceMode.VC_SSL: ("codebook", "content_encoder", "score_net", "speaker_encoder"),
    EnhanceMode.GSR_VC: ("gsr", "codebook", "content_encoder", "score_net", "speaker_encoder"),
}


class ComponentEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    file: str
    kind: str
    config_hash: str
    parameters: int = Field(default=0, ge=0)


class BundleManifest(BaseModel):
    """bundle.json: component table plus the settings every component shares."""

    model_config = ConfigDict(extra="forbid")

    format_version: int = BUNDLE_FORMAT_VERSION
    mel_config: MelConfig = Field(default_factory=MelConfig)
    vocoder: VocoderConfig = Field(default_factory=VocoderConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    handoff: Literal["waveform", "mel"] = "waveform"
    components: dict[str, ComponentEntry] = Field(default_factory=dict)
