from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Literal

import pandas as pd
from pydantic import ValidationError

from app.core.errors import CorruptCheckpoint, MissingComponent, VersionMismatch
from app.core.schemas.audio import MelConfig, VocoderConfig
from app.core.schemas.bundle import (
    BUNDLE_FORMAT_VERSION,
    REQUIRED_COMPONENTS,
    BundleManifest,
    ComponentEntry,
    EnhanceMode,
)
from app.core.schemas.diffusion import GuidanceConfig, ScheduleConfig
from app.ml.features.encoders import Codebook
from app.ml.models.content_encoder import ContentEncoder
from app.ml.models.projection import MelProjection
from app.ml.models.resunet import ResUNet
from app.ml.models.score_net import ScoreNetwork
from app.ml.models.speaker_encoder import SpeakerEncoder
from app.ml.nn.checkpoint import checkpoint_tensor_elements, load_checkpoint, save_checkpoint
from app.ml.nn.module import config_hash, count_parameters, parameter_table

logger = logging.getLogger(__name__)

BUNDLE_FILE = "bundle.json"
MODULE_COMPONENTS = (
    "gsr",
    "content_encoder",
    "score_net",
    "mel_projection",
    "mel_score_net",
    "speaker_encoder",
)


@dataclass
class ModelBundle:
    gsr: ResUNet | None = None
    codebook: Codebook | None = None
    content_encoder: ContentEncoder | None = None
    score_net: ScoreNetwork | None = None
    mel_projection: MelProjection | None = None
    mel_score_net: ScoreNetwork | None = None
    speaker_encoder: SpeakerEncoder | None = None
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)
    mel_config: MelConfig = field(default_factory=MelConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    handoff: Literal["waveform", "mel"] = "waveform"

    def component(self, name: str):
        return getattr(self, name)

    def available(self) -> list[str]:
        return [n for n in (*MODULE_COMPONENTS, "codebook") if self.component(n) is not None]

    def require(self, mode: EnhanceMode, *, supplied: tuple[str, ...] = ()) -> None:
        """`supplied` names components whose output the caller provides directly."""
        missing = [n for n in REQUIRED_COMPONENTS[mode] if n not in supplied and self.component(n) is None]
        if missing:
            raise MissingComponent(f"mode {mode.value} needs missing component(s): {', '.join(missing)}")

    def parameter_report(self) -> pd.DataFrame:
        return parameter_table({n: self.component(n) for n in MODULE_COMPONENTS})

    def check_mel_bands(self) -> None:
        """All components must work on mel_config.n_mels bands."""
        n = self.mel_config.n_mels
        for name in MODULE_COMPONENTS:
            module = self.component(name)
            if module is not None and getattr(module.config, "n_mels", n) != n:
                raise VersionMismatch(f"{name} uses {module.config.n_mels} mel bands, bundle uses {n}")


def save_bundle(bundle: ModelBundle, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    bundle.check_mel_bands()

    components: dict[str, ComponentEntry] = {}
    for name in MODULE_COMPONENTS:
        module = bundle.component(name)
        if module is None:
            continue
        fname = f"{name}.ckpt"
        save_checkpoint(module, out / fname)
        components[name] = ComponentEntry(
            file=fname,
            kind=module.kind,
            config_hash=module.config_hash(),
            parameters=count_parameters(module),
        )
    if bundle.codebook is not None:
        bundle.codebook.save(out / "codebook.ckpt")
        components["codebook"] = ComponentEntry(
            file="codebook.ckpt",
            kind="codebook",
            config_hash=config_hash("codebook", bundle.codebook.config()),
        )

    manifest = BundleManifest(
        format_version=BUNDLE_FORMAT_VERSION,
        mel_config=bundle.mel_config,
        vocoder=bundle.vocoder,
        guidance=bundle.guidance,
        schedule=bundle.schedule,
        handoff=bundle.handoff,
        components=components,
    )
    path = out / BUNDLE_FILE
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info("saved bundle with %s -> %s", sorted(components), out)
    return path


def read_bundle_manifest(directory: str | Path) -> BundleManifest:
    path = Path(directory) / BUNDLE_FILE
    if not path.exists():
        raise FileNotFoundError(f"Bundle manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptCheckpoint(f"{path}: unreadable bundle manifest ({e})") from e
    if raw.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: bundle format_version {raw.get('format_version')}, expected {BUNDLE_FORMAT_VERSION}"
        )
    try:
        return BundleManifest.model_validate(raw)
    except ValidationError as e:
        raise CorruptCheckpoint(f"{path}: invalid bundle manifest ({e})") from e


def load_bundle(directory: str | Path) -> ModelBundle:
    """
    Load every component whose checkpoint is present, validating its config hash.

    Absent files leave the component empty; modes that need it raise
    MissingComponent at enhance time.
    """
    root = Path(directory)
    manifest = read_bundle_manifest(root)
    bundle = ModelBundle(
        vocoder=manifest.vocoder,
        mel_config=manifest.mel_config,
        guidance=manifest.guidance,
        schedule=manifest.schedule,
        handoff=manifest.handoff,
    )
    known = {f.name for f in fields(ModelBundle)}
    for name, entry in manifest.components.items():
        if name not in known:
            raise VersionMismatch(f"bundle lists unknown component {name!r}")
        path = root / entry.file
        if not path.exists():
            logger.warning("bundle component %s missing (%s)", name, path)
            continue
        if name == "codebook":
            value = Codebook.load(path, expected_config_hash=entry.config_hash)
        else:
            value = load_checkpoint(
                path, expected_kind=entry.kind, expected_config_hash=entry.config_hash
            )
        setattr(bundle, name, value)
    bundle.check_mel_bands()
    logger.info("loaded bundle %s: %s", root, bundle.available())
    return bundle


def component_elements(directory: str | Path) -> dict[str, int]:
    """Element counts per component, read from the checkpoint headers only."""
    root = Path(directory)
    manifest = read_bundle_manifest(root)
    return {
        name: checkpoint_tensor_elements(root / entry.file)
        for name, entry in manifest.components.items()
    }
