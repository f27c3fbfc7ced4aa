from __future__ import annotations

import logging
import math
from typing import Sequence

import librosa
import numpy as np

from app.core.errors import LengthMismatch, ZeroReference
from app.core.schemas.audio import MelConfig
from app.ml.models.speaker_encoder import SpeakerEncoder, speaker_embed
from app.ml.signal.audio import AudioClip
from app.ml.signal.mel import mel_spectrogram

logger = logging.getLogger(__name__)

LSD_DELTA = 1e-8


def _match_length(ref: AudioClip, est: AudioClip, metric: str) -> AudioClip:
    if len(est) != len(ref):
        logger.warning(
            "%s: estimate has %d samples, reference %d; fitting to reference", metric, len(est), len(ref)
        )
        return est.fit_length(len(ref))
    return est


def _log_spectrum(clip: AudioClip, config: MelConfig) -> np.ndarray:
    spec = librosa.stft(
        clip.samples,
        n_fft=config.n_fft,
        hop_length=config.hop_length,
        win_length=config.win_length,
        window="hann",
        center=True,
        pad_mode="reflect",
    )
    return 20.0 * np.log10(np.abs(spec) + LSD_DELTA)


def lsd(ref: AudioClip, est: AudioClip, config: MelConfig | None = None) -> float:
    """Log-spectral distance in dB: per-frame RMS over frequency, averaged over frames."""
    config = config or MelConfig()
    est = _match_length(ref, est, "lsd")
    diff = _log_spectrum(ref, config) - _log_spectrum(est, config)
    per_frame = np.sqrt(np.mean(diff**2, axis=0))
    return float(np.mean(per_frame))


def si_sdr(ref: AudioClip | np.ndarray, est: AudioClip | np.ndarray) -> float:
    """
    Scale-invariant SDR in dB.

    Returns math.inf when the estimate is an exact rescaling of the reference.
    """
    r = np.asarray(getattr(ref, "samples", ref), dtype=np.float64)
    e = np.asarray(getattr(est, "samples", est), dtype=np.float64)
    if r.shape != e.shape:
        raise LengthMismatch(f"si_sdr needs equal lengths, got {r.shape} and {e.shape}")
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0.0:
        raise ZeroReference("si_sdr reference is silent")

    alpha = float(np.dot(e, r)) / ref_energy
    target = alpha * r
    residual = e - target
    target_energy = float(np.dot(target, target))
    residual_energy = float(np.dot(residual, residual))
    if residual_energy <= np.finfo(np.float64).eps ** 2 * max(target_energy, np.finfo(np.float64).tiny):
        return math.inf
    if target_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(target_energy / residual_energy)


def mel_l1(ref: AudioClip, est: AudioClip, config: MelConfig | None = None) -> float:
    config = config or MelConfig()
    est = _match_length(ref, est, "mel_l1")
    a = mel_spectrogram(ref, config).values.astype(np.float64)
    b = mel_spectrogram(est, config).values.astype(np.float64)
    return float(np.mean(np.abs(a - b)))


def speaker_similarity(
    a: AudioClip, b: AudioClip, encoder: SpeakerEncoder, config: MelConfig | None = None
) -> float:
    return speaker_embed([a], encoder, config).cosine(speaker_embed([b], encoder, config))


def speaker_cosine(
    est: AudioClip,
    enrollment: Sequence[AudioClip],
    encoder: SpeakerEncoder,
    config: MelConfig | None = None,
) -> float:
    """Cosine between the output's embedding and the averaged enrollment embedding."""
    return speaker_embed([est], encoder, config).cosine(speaker_embed(list(enrollment), encoder, config))


METRICS = ("lsd", "si_sdr", "mel_l1", "speaker_cosine")
