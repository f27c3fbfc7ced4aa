from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from joblib import Parallel, delayed

from app.core.errors import ConfigError, EmptyEnrollment, ShapeMismatch
from app.core.schemas.bundle import EnhanceMode
from app.ml.diffusion.sampler import reverse_sample
from app.ml.diffusion.schedule import DiffusionSchedule
from app.ml.features.encoders import CepstralFeatureExtractor, ContentUnits, assign_units
from app.ml.inference.gsr import gsr_forward
from app.ml.inference.vocoder import build_vocoder
from app.ml.models.content_encoder import content_encode
from app.ml.models.speaker_encoder import SpeakerEmbedding, speaker_embed
from app.ml.signal.audio import AudioClip, read_wav, write_wav
from app.ml.signal.mel import MelSpectrogram, mel_spectrogram
from app.services.pipeline.bundle import ModelBundle

logger = logging.getLogger(__name__)


@dataclass
class EnhanceResult:
    audio: AudioClip
    stages: dict[str, MelSpectrogram] = field(default_factory=dict)


def _coarse_from_mel(
    mel: MelSpectrogram, bundle: ModelBundle, mode: EnhanceMode, units: ContentUnits | None = None
):
    if mode is EnhanceMode.VC_MEL:
        assert bundle.mel_projection is not None
        bundle.mel_projection.eval()
        with torch.no_grad():
            return bundle.mel_projection(torch.from_numpy(mel.values.copy())).numpy()
    assert bundle.content_encoder is not None
    if units is None:
        assert bundle.codebook is not None
        extractor = CepstralFeatureExtractor.for_kind(bundle.codebook.feature_kind)
        units = ContentUnits(ids=assign_units(extractor.transform(mel), bundle.codebook))
    elif len(units) != mel.frames:
        raise ShapeMismatch(f"{len(units)} external units for {mel.frames} mel frames")
    return content_encode(units, bundle.content_encoder).values


def _vc_stage(
    mel: MelSpectrogram,
    bundle: ModelBundle,
    mode: EnhanceMode,
    spk: SpeakerEmbedding,
    seed: int,
    stages: dict[str, MelSpectrogram],
    units: ContentUnits | None = None,
) -> MelSpectrogram:
    net = bundle.mel_score_net if mode is EnhanceMode.VC_MEL else bundle.score_net
    if spk.dim != net.config.speaker_dim:
        raise ShapeMismatch(
            f"speaker embedding has {spk.dim} dims, score network expects {net.config.speaker_dim}"
        )
    m_hat = _coarse_from_mel(mel, bundle, mode, units)
    stages["coarse"] = MelSpectrogram.floored(m_hat, bundle.mel_config)
    return reverse_sample(
        net,
        m_hat,
        spk,
        bundle.guidance,
        seed,
        schedule=DiffusionSchedule.from_config(bundle.schedule),
        mel_config=bundle.mel_config,
    )


def enhance_with_stages(
    audio: AudioClip,
    mode: EnhanceMode,
    bundle: ModelBundle,
    enrollment: Sequence[AudioClip] = (),
    *,
    seed: int = 0,
    units: ContentUnits | None = None,
    speaker: SpeakerEmbedding | None = None,
) -> EnhanceResult:
    """
    Run one system variant and keep the intermediate log-mels
    (`input`, `gsr`, `coarse`, `output` as applicable).

    `units` replaces the codebook units of the VC input (one per mel frame,
    vc-ssl and gsr+vc only). `speaker` replaces the enrollment embedding.
    """
    mode = EnhanceMode(mode)
    supplied = (("codebook",) if units is not None else ()) + (("speaker_encoder",) if speaker is not None else ())
    bundle.require(mode, supplied=supplied)
    if units is not None and mode not in (EnhanceMode.VC_SSL, EnhanceMode.GSR_VC):
        raise ConfigError(f"external units do not apply to mode {mode.value}")
    if speaker is not None and mode is EnhanceMode.GSR:
        raise ConfigError("mode gsr takes no speaker embedding")
    vocoder = build_vocoder(bundle.vocoder)
    stages: dict[str, MelSpectrogram] = {}
    mel = mel_spectrogram(audio, bundle.mel_config)
    stages["input"] = mel

    if mode is EnhanceMode.GSR:
        restored = gsr_forward(bundle.gsr, mel)
        stages["gsr"] = restored
        stages["output"] = restored
        return EnhanceResult(vocoder(restored, length=len(audio)), stages)

    if speaker is not None:
        spk = speaker
    elif enrollment:
        spk = speaker_embed(list(enrollment), bundle.speaker_encoder, bundle.mel_config)
    else:
        raise EmptyEnrollment(f"mode {mode.value} needs at least one enrollment clip")

    if mode is EnhanceMode.GSR_VC:
        restored = gsr_forward(bundle.gsr, mel)
        stages["gsr"] = restored
        if bundle.handoff == "waveform":
            gsr_audio = vocoder(restored, length=len(audio))
            mel = mel_spectrogram(gsr_audio, bundle.mel_config)
        else:
            mel = restored
        vc_mode = EnhanceMode.VC_SSL
    else:
        vc_mode = mode

    out_mel = _vc_stage(mel, bundle, vc_mode, spk, seed, stages, units)
    stages["output"] = out_mel
    return EnhanceResult(vocoder(out_mel, length=len(audio)), stages)


def enhance(
    audio: AudioClip,
    mode: EnhanceMode | str,
    bundle: ModelBundle,
    enrollment: Sequence[AudioClip] = (),
    *,
    seed: int = 0,
    units: ContentUnits | None = None,
    speaker: SpeakerEmbedding | None = None,
) -> AudioClip:
    return enhance_with_stages(
        audio, EnhanceMode(mode), bundle, enrollment, seed=seed, units=units, speaker=speaker
    ).audio


def _enhance_file(
    in_path: str,
    enroll_paths: Sequence[str],
    out_path: str,
    mode: EnhanceMode,
    bundle: ModelBundle,
    seed: int,
    units: ContentUnits | None = None,
    speaker: SpeakerEmbedding | None = None,
) -> str:
    clip = read_wav(in_path)
    skip = speaker is not None or mode is EnhanceMode.GSR
    enrollment = [] if skip else [read_wav(p) for p in enroll_paths]
    write_wav(enhance(clip, mode, bundle, enrollment, seed=seed, units=units, speaker=speaker), out_path)
    return out_path


def enhance_files(
    jobs_spec: Sequence[tuple[str, Sequence[str], str]],
    mode: EnhanceMode | str,
    bundle: ModelBundle,
    *,
    seed: int = 0,
    jobs: int = 1,
    units: Sequence[ContentUnits | None] | None = None,
    speakers: Sequence[SpeakerEmbedding | None] | None = None,
) -> list[str]:
    """
    (input, enrollment paths, output) triples; threads share the eval-mode bundle.
    `units` and `speakers`, when given, are aligned with `jobs_spec`.
    """
    mode = EnhanceMode(mode)
    n = len(jobs_spec)
    units = list(units) if units is not None else [None] * n
    speakers = list(speakers) if speakers is not None else [None] * n
    if len(units) != n or len(speakers) != n:
        raise ShapeMismatch("units and speakers must align with the job list")
    results = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_enhance_file)(i, e, o, mode, bundle, seed, u, s)
        for (i, e, o), u, s in zip(jobs_spec, units, speakers)
    )
    for path in results:
        logger.debug("enhanced -> %s", path)
    return [str(Path(p)) for p in results]
