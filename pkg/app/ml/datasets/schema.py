from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class ManifestRow(BaseModel):
    """One JSONL manifest line. Relative paths resolve against the manifest's directory."""

    model_config = ConfigDict(extra="forbid")

    utterance_id: str = Field(..., min_length=1)
    clean_path: str
    degraded_path: str | None = None
    enhanced_path: str | None = None
    speaker_id: str
    enrollment_paths: list[str] = Field(default_factory=list)


class ExternalUnitsRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    utterance_id: str
    ids: list[int] = Field(..., min_length=1)


class ExternalSpeakerRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    speaker_id: str
    vector: list[float] = Field(..., min_length=1)
