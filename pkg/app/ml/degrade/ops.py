from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import librosa
import numpy as np
import scipy.fft
import scipy.signal

from app.core.errors import ParameterOutOfRange, SnrOutOfRange, ZeroNoise
from app.core.schemas.audio import SAMPLE_RATE
from app.core.schemas.degradation import (
    CODEC_BITS_RANGE,
    MAX_DROP_MS,
    SNR_RANGE,
    SYNTHETIC_NOISES,
)
from app.ml.signal.audio import AudioClip, as_array, read_wav
from app.ml.signal.snr import measure_snr, scale_noise_to_snr

logger = logging.getLogger(__name__)

PEAK_TARGET = 0.99
RIR_MAX_SECONDS = 0.5
MIN_TRANSITION_HZ = 50.0


# ---------------------------------------------------------------------------
# Noise sources
# ---------------------------------------------------------------------------


def coloured_noise(kind: str, n: int, seed: int) -> np.ndarray:
    """Unit-variance white / pink (1/f power) / brown (1/f^2 power) noise."""
    if kind not in SYNTHETIC_NOISES:
        raise ParameterOutOfRange(f"unknown noise colour: {kind}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    if kind == "white" or n < 2:
        out = white
    else:
        spec = scipy.fft.rfft(white)
        freqs = scipy.fft.rfftfreq(n)
        freqs[0] = freqs[1]
        exponent = 0.5 if kind == "pink" else 1.0
        out = scipy.fft.irfft(spec / freqs**exponent, n=n)
    std = float(np.std(out))
    return out / std if std > 0 else out


def load_noise(source: str, n: int, seed: int) -> np.ndarray:
    """Noise samples from a colour name or a WAV path (WAV files are returned as-is, looped later)."""
    if source in SYNTHETIC_NOISES:
        return coloured_noise(source, n, seed)
    path = Path(source)
    if not path.exists():
        raise ParameterOutOfRange(f"noise source is neither a colour nor an existing file: {source}")
    return read_wav(path).samples


def loop_noise(noise: np.ndarray, n: int, offset: int) -> np.ndarray:
    """Tile or truncate `noise` to n samples, starting at `offset` and wrapping around."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size == 0:
        raise ZeroNoise("noise source has no samples")
    idx = (int(offset) + np.arange(n)) % noise.size
    return noise[idx]


# ---------------------------------------------------------------------------
# Additive noise
# ---------------------------------------------------------------------------


def mix_with_details(
    clean: AudioClip,
    noise: AudioClip | np.ndarray,
    snr: float,
    *,
    offset: int = 0,
) -> tuple[AudioClip, dict[str, Any]]:
    """
    clean + gain * noise at the requested SNR.

    Returns the mixture and the realised parameters: gain, realised SNR
    (measured before any renormalisation), offset and the peak scale
    applied (1.0 when the mixture already fits in [-1, 1]).
    """
    if not SNR_RANGE[0] <= snr <= SNR_RANGE[1]:
        raise SnrOutOfRange(f"snr {snr} dB outside {list(SNR_RANGE)}")

    s = clean.samples
    looped = loop_noise(as_array(noise), s.size, offset)
    gain = scale_noise_to_snr(s, looped, snr)
    scaled = gain * looped
    realized = measure_snr(s, scaled)

    mixed = s + scaled
    peak = float(np.max(np.abs(mixed)))
    peak_scale = 1.0
    if peak > 1.0:
        peak_scale = PEAK_TARGET / peak
        mixed = mixed * peak_scale
        logger.debug("mix: peak %.3f renormalised by %.4f", peak, peak_scale)

    details = {
        "snr": float(snr),
        "realized_snr": float(realized),
        "gain": float(gain),
        "offset": int(offset),
        "peak_scale": float(peak_scale),
    }
    return clean.with_samples(mixed), details


def mix_at_snr(
    clean: AudioClip, noise: AudioClip | np.ndarray, snr: float, *, offset: int = 0
) -> AudioClip:
    mixed, _ = mix_with_details(clean, noise, snr, offset=offset)
    return mixed


# ---------------------------------------------------------------------------
# Packet loss
# ---------------------------------------------------------------------------


def packet_drop_segments(
    n_samples: int, n_drops: int, max_len_ms: float, seed: int
) -> list[tuple[int, int]]:
    """
    Disjoint (start, length) pairs in samples, sorted by start.

    Exactly `n_drops` segments; each is followed by at least one kept sample,
    so no two drops merge into one run. Lengths are drawn first, then the free
    samples are split among the gaps. Lengths shrink proportionally when the
    drops do not fit.
    """
    if n_drops < 0:
        raise ParameterOutOfRange("n_drops must be >= 0")
    if not 0.0 <= max_len_ms <= MAX_DROP_MS:
        raise ParameterOutOfRange(f"max_len_ms {max_len_ms} outside [0, {MAX_DROP_MS}]")
    if n_drops == 0:
        return []
    if n_drops > n_samples:
        raise ParameterOutOfRange(f"{n_drops} separate drops do not fit in {n_samples} samples")

    rng = np.random.default_rng(seed)
    per_ms = SAMPLE_RATE / 1000.0
    lengths = np.round(rng.uniform(0.0, max_len_ms, size=n_drops) * per_ms).astype(np.int64)
    budget = n_samples - n_drops
    if lengths.sum() > budget:
        lengths = np.floor(lengths * (budget / lengths.sum())).astype(np.int64)
    free = budget - int(lengths.sum())
    offsets = np.sort(rng.integers(0, free + 1, size=n_drops))

    segments: list[tuple[int, int]] = []
    used = 0
    for offset, length in zip(offsets, lengths):
        segments.append((int(offset) + used, int(length)))
        used += int(length) + 1
    return segments


def zero_segments(audio: AudioClip, segments: list[tuple[int, int]] | list[list[int]]) -> AudioClip:
    out = audio.samples.copy()
    for start, length in segments:
        out[int(start) : int(start) + int(length)] = 0.0
    return audio.with_samples(out)


def packet_drop(
    audio: AudioClip, n_drops: int, max_len_ms: float = MAX_DROP_MS, seed: int = 0
) -> AudioClip:
    if n_drops == 0:
        return audio
    return zero_segments(audio, packet_drop_segments(len(audio), n_drops, max_len_ms, seed))


# ---------------------------------------------------------------------------
# Clipping, band limiting, reverberation, codec
# ---------------------------------------------------------------------------


def clip(audio: AudioClip, threshold: float) -> AudioClip:
    """Clamp samples to +-threshold * peak."""
    if not 0.0 < threshold <= 1.0:
        raise ParameterOutOfRange(f"clip threshold {threshold} outside (0, 1]")
    level = threshold * audio.peak
    return audio.with_samples(np.clip(audio.samples, -level, level))


def design_lowpass(cutoff: float, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """
    Kaiser-window FIR low-pass: passband up to `cutoff`, >= 80 dB down from 1.2 * cutoff
    (or from Nyquist when 1.2 * cutoff would exceed it).
    """
    nyq = sample_rate / 2
    if not 0.0 < cutoff < nyq:
        raise ParameterOutOfRange(f"band_limit cutoff {cutoff} Hz outside (0, {nyq:g})")
    stop = min(1.2 * cutoff, nyq)
    passband = min(cutoff, stop - MIN_TRANSITION_HZ)
    if passband <= 0.0:
        passband = stop / 2
    numtaps, beta = scipy.signal.kaiserord(ripple=80.0, width=(stop - passband) / nyq)
    numtaps |= 1  # type I: odd length
    return scipy.signal.firwin(
        numtaps, (passband + stop) / 2, window=("kaiser", beta), fs=sample_rate
    )


def band_limit(audio: AudioClip, cutoff: float) -> AudioClip:
    taps = design_lowpass(cutoff, audio.sample_rate)
    out = scipy.signal.fftconvolve(audio.samples, taps, mode="same")
    return audio.with_samples(out)


def synth_rir(rt60: float, seed: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """White noise under an exp(-6.9 t / rt60) envelope (60 dB energy decay at rt60), unit L2 norm."""
    if rt60 <= 0.0:
        raise ParameterOutOfRange("rt60 must be > 0")
    n = max(1, int(round(min(rt60, RIR_MAX_SECONDS) * sample_rate)))
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    rir = rng.standard_normal(n) * np.exp(-6.9 * t / rt60)
    return rir / np.linalg.norm(rir)


def reverberate(audio: AudioClip, rt60: float, seed: int = 0) -> AudioClip:
    rir = synth_rir(rt60, seed, audio.sample_rate)
    wet = scipy.signal.fftconvolve(audio.samples, rir, mode="full")[: len(audio)]
    return audio.with_samples(wet)


def codec_artifact(audio: AudioClip, bits: int) -> AudioClip:
    """mu-law companding round trip with mu = 2**bits - 1."""
    if not CODEC_BITS_RANGE[0] <= bits <= CODEC_BITS_RANGE[1]:
        raise ParameterOutOfRange(f"codec bits {bits} outside {list(CODEC_BITS_RANGE)}")
    mu = 2**bits - 1
    x = np.clip(audio.samples, -1.0, 1.0)
    q = librosa.mu_compress(x, mu=mu, quantize=True)
    return audio.with_samples(librosa.mu_expand(q, mu=mu, quantize=True))
