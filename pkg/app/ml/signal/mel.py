from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import librosa
import numpy as np

from app.core.errors import EmptyAudio, SampleRateMismatch, ShapeMismatch
from app.core.schemas.audio import MelConfig
from app.ml.signal.audio import AudioClip

logger = logging.getLogger(__name__)

MelInversion = Literal["transpose", "pinv", "nnls"]


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """frames x n_mels matrix of natural-log, epsilon-floored mel amplitudes."""

    values: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim != 2 or arr.shape[1] != self.config.n_mels:
            raise ShapeMismatch(
                f"expected (frames, {self.config.n_mels}) mel matrix, got {arr.shape}"
            )
        if arr.shape[0] < 1:
            raise ShapeMismatch("mel spectrogram has no frames")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def floored(cls, values: np.ndarray, config: MelConfig) -> "MelSpectrogram":
        """Clamp into the valid log range before wrapping (model outputs can dip below the floor)."""
        return cls(np.maximum(np.asarray(values, dtype=np.float32), np.float32(config.log_min)), config)


def _stft_kwargs(config: MelConfig) -> dict:
    return dict(
        n_fft=config.n_fft,
        hop_length=config.hop_length,
        win_length=config.win_length,
        window="hann",
        center=True,
        pad_mode="reflect",
    )


@lru_cache(maxsize=8)
def _filterbank_cached(config: MelConfig) -> np.ndarray:
    fb = librosa.filters.mel(
        sr=config.sample_rate,
        n_fft=config.n_fft,
        n_mels=config.n_mels,
        fmin=config.fmin,
        fmax=config.fmax,
        htk=True,
        norm="slaney",  # area normalisation
    )
    fb = fb.astype(np.float64)
    fb.setflags(write=False)
    return fb


def mel_filterbank(config: MelConfig | None = None) -> np.ndarray:
    """HTK-scale triangular filters, area-normalised; shape (n_mels, n_fft // 2 + 1)."""
    return _filterbank_cached(config or MelConfig())


@lru_cache(maxsize=8)
def _transpose_cached(config: MelConfig) -> np.ndarray:
    # W[k, m] = fb[m, k] / (sum_m fb[m, k] * sum_k fb[m, k]); a flat spectrum inverts exactly
    fb = mel_filterbank(config)
    rows = fb.sum(axis=1)[None, :]
    cols = fb.sum(axis=0)[:, None]
    scale = cols * rows
    inv = np.divide(fb.T, scale, out=np.zeros_like(fb.T), where=scale > 0)
    inv.setflags(write=False)
    return inv


@lru_cache(maxsize=8)
def _pinv_cached(config: MelConfig) -> np.ndarray:
    inv = np.linalg.pinv(mel_filterbank(config))
    inv.setflags(write=False)
    return inv


def stft_magnitude(audio: AudioClip, config: MelConfig | None = None) -> np.ndarray:
    """|STFT| with shape (n_fft // 2 + 1, 1 + T // hop)."""
    config = config or MelConfig()
    if audio.sample_rate != config.sample_rate:
        raise SampleRateMismatch(
            f"audio is {audio.sample_rate} Hz but MelConfig expects {config.sample_rate} Hz"
        )
    if len(audio) == 0:
        raise EmptyAudio("cannot analyse an empty clip")
    spec = librosa.stft(audio.samples, **_stft_kwargs(config))
    return np.abs(spec)


def mel_from_magnitude(magnitude: np.ndarray, config: MelConfig | None = None) -> MelSpectrogram:
    config = config or MelConfig()
    mel_amp = mel_filterbank(config) @ magnitude
    values = np.log(np.maximum(mel_amp, config.log_floor)).T
    return MelSpectrogram(values=values, config=config)


def mel_spectrogram(audio: AudioClip, config: MelConfig | None = None) -> MelSpectrogram:
    config = config or MelConfig()
    return mel_from_magnitude(stft_magnitude(audio, config), config)


def magnitude_from_mel(mel: MelSpectrogram, method: MelInversion = "transpose") -> np.ndarray:
    """
    Invert log-mel to a non-negative linear magnitude, shape (n_freqs, frames).

    `transpose` applies the transposed filterbank, scaled so that a flat
    spectrum inverts exactly. `pinv` uses the Moore-Penrose pseudo-inverse and
    `nnls` librosa's non-negative least squares. The result is clamped at zero
    per bin.
    """
    config = mel.config
    mel_amp = np.exp(mel.values.astype(np.float64)).T

    if method == "pinv":
        mag = _pinv_cached(config) @ mel_amp
    elif method == "transpose":
        mag = _transpose_cached(config) @ mel_amp
    elif method == "nnls":
        mag = librosa.feature.inverse.mel_to_stft(
            mel_amp,
            sr=config.sample_rate,
            n_fft=config.n_fft,
            power=1.0,
            fmin=config.fmin,
            fmax=config.fmax,
            htk=True,
            norm="slaney",
        )
    else:
        raise ValueError(f"unknown mel inversion method: {method}")

    return np.maximum(mag, 0.0)


def griffin_lim(
    mel: MelSpectrogram,
    iterations: int = 64,
    seed: int = 0,
    *,
    method: MelInversion = "transpose",
    length: int | None = None,
) -> AudioClip:
    """
    Deterministic mel -> waveform synthesis.

    Default output length is (frames - 1) * hop; pass `length` to match a
    known source duration exactly.
    """
    if iterations < 1:
        raise ValueError("griffin_lim needs at least one iteration")
    config = mel.config
    mag = magnitude_from_mel(mel, method=method)
    out_len = length if length is not None else (mel.frames - 1) * config.hop_length
    out_len = max(int(out_len), 1)

    y = librosa.griffinlim(
        mag,
        n_iter=iterations,
        hop_length=config.hop_length,
        win_length=config.win_length,
        n_fft=config.n_fft,
        window="hann",
        center=True,
        pad_mode="reflect",
        length=out_len,
        init="random",
        random_state=int(seed),
    )
    logger.debug("griffin_lim: %d frames -> %d samples (%d iters)", mel.frames, out_len, iterations)
    return AudioClip(samples=np.asarray(y, dtype=np.float64), sample_rate=config.sample_rate)
