from __future__ import annotations

import math

import numpy as np

from app.core.errors import LengthMismatch, ZeroNoise, ZeroSignal
from app.ml.signal.audio import AudioClip, as_array


def _energies(signal: AudioClip | np.ndarray, noise: AudioClip | np.ndarray) -> tuple[float, float]:
    s = as_array(signal)
    n = as_array(noise)
    if s.shape != n.shape:
        raise LengthMismatch(f"signal has {s.size} samples, noise has {n.size}")
    return float(np.dot(s, s)), float(np.dot(n, n))


def measure_snr(signal: AudioClip | np.ndarray, noise: AudioClip | np.ndarray) -> float:
    """10*log10(sum(s^2) / sum(n^2)) in dB."""
    es, en = _energies(signal, noise)
    if en == 0.0:
        raise ZeroNoise("noise is identically zero; SNR undefined")
    if es == 0.0:
        return -math.inf
    return 10.0 * math.log10(es / en)


def scale_noise_to_snr(
    signal: AudioClip | np.ndarray, noise: AudioClip | np.ndarray, target_snr: float
) -> float:
    """Gain g such that measure_snr(signal, g * noise) == target_snr."""
    es, en = _energies(signal, noise)
    if es == 0.0:
        raise ZeroSignal("signal is silent; cannot scale noise to a target SNR")
    if en == 0.0:
        raise ZeroNoise("noise is identically zero; cannot reach a finite SNR")
    return math.sqrt(es / (en * 10.0 ** (target_snr / 10.0)))
