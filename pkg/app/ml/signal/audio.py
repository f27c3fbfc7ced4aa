from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from app.core.errors import EmptyAudio, SampleRateMismatch, UnsupportedAudioFormat
from app.core.schemas.audio import SAMPLE_RATE


@dataclass(frozen=True, eq=False)
class AudioClip:
    """
    Mono waveform at 16 kHz.

    Samples are stored as float64 so SNR arithmetic stays exact to ~1e-12 dB.
    The [-1, 1] range is enforced where audio leaves the process (write_wav)
    and on peak-normalised mixtures, not on every intermediate signal.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim != 1:
            raise UnsupportedAudioFormat(f"expected mono 1-D samples, got shape {arr.shape}")
        if arr.size == 0:
            raise EmptyAudio("audio clip has no samples")
        if not np.all(np.isfinite(arr)):
            raise ValueError("audio clip contains non-finite samples")
        if self.sample_rate != SAMPLE_RATE:
            raise SampleRateMismatch(
                f"expected {SAMPLE_RATE} Hz audio, got {self.sample_rate} Hz"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples=samples, sample_rate=self.sample_rate)

    def fit_length(self, n: int) -> "AudioClip":
        """Trim or zero-pad to exactly n samples."""
        if n == len(self):
            return self
        if n < len(self):
            return self.with_samples(self.samples[:n])
        return self.with_samples(np.pad(self.samples, (0, n - len(self))))


def as_array(x: AudioClip | np.ndarray) -> np.ndarray:
    if isinstance(x, AudioClip):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def read_wav(path: str | Path) -> AudioClip:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Audio file not found: {p}")
    try:
        info = sf.info(str(p))
    except RuntimeError as e:
        raise UnsupportedAudioFormat(f"{p}: not a readable audio file ({e})") from e

    if info.format != "WAV" or info.subtype != "PCM_16":
        raise UnsupportedAudioFormat(
            f"{p}: expected 16-bit PCM WAV, got {info.format}/{info.subtype}"
        )
    if info.channels != 1:
        raise UnsupportedAudioFormat(f"{p}: expected mono, got {info.channels} channels")
    if info.samplerate != SAMPLE_RATE:
        raise UnsupportedAudioFormat(f"{p}: expected {SAMPLE_RATE} Hz, got {info.samplerate} Hz")

    data, sr = sf.read(str(p), dtype="float64", always_2d=False)
    return AudioClip(samples=data, sample_rate=sr)


def write_wav(clip: AudioClip, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(clip.samples, -1.0, 1.0)
    sf.write(str(p), data, clip.sample_rate, subtype="PCM_16", format="WAV")
    return p
