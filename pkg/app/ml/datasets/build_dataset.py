from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.core.schemas.audio import SAMPLE_RATE
from app.core.schemas.degradation import DegradeConfig
from app.ml.datasets.manifest import write_manifest
from app.ml.datasets.schema import ManifestRow
from app.ml.degrade.chain import apply_chain
from app.ml.degrade.sampling import sample_spec
from app.ml.signal.audio import AudioClip, write_wav

logger = logging.getLogger(__name__)

# F1, F2, F3 in Hz for a reference adult voice
VOWELS: dict[str, tuple[float, float, float]] = {
    "a": (730.0, 1090.0, 2440.0),
    "e": (530.0, 1840.0, 2480.0),
    "i": (270.0, 2290.0, 3010.0),
    "o": (570.0, 840.0, 2410.0),
    "u": (300.0, 870.0, 2240.0),
}
FADE_S = 0.01
PEAK = 0.5


@dataclass(frozen=True)
class ToyVoice:
    speaker_id: str
    f0: float
    formant_scale: float
    tilt: float

    @classmethod
    def for_index(cls, i: int) -> "ToyVoice":
        # spread pitch and vocal-tract length so voices are separable
        return cls(
            speaker_id=f"spk{i:02d}",
            f0=100.0 + 45.0 * i,
            formant_scale=0.88 + 0.09 * (i % 4),
            tilt=0.9 - 0.05 * (i % 3),
        )


def _vowel(voice: ToyVoice, vowel: str, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    glide = rng.uniform(-0.08, 0.08)
    f0 = voice.f0 * (1.0 + glide * t / max(t[-1], 1e-9)) * (1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    formants = np.array(VOWELS[vowel]) * voice.formant_scale

    out = np.zeros(n)
    mean_f0 = float(np.mean(f0))
    for k in range(1, int(7600.0 / mean_f0) + 1):
        freq = k * mean_f0
        env = sum(np.exp(-(((freq - f) / (60.0 + 0.06 * f)) ** 2)) for f in formants)
        amp = (voice.tilt**k) * (0.02 + env)
        out += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out


def _fade(x: np.ndarray) -> np.ndarray:
    m = min(int(FADE_S * SAMPLE_RATE), x.size // 2)
    if m > 0:
        ramp = np.linspace(0.0, 1.0, m)
        x[:m] *= ramp
        x[-m:] *= ramp[::-1]
    return x


def synth_utterance(voice: ToyVoice, seconds: float, seed: int) -> AudioClip:
    """Vowel-sequence 'speech' with short pauses, peak-normalised to 0.5."""
    rng = np.random.default_rng(seed)
    total = int(round(seconds * SAMPLE_RATE))
    parts: list[np.ndarray] = []
    used = 0
    names = list(VOWELS)
    while used < total:
        n = min(int(rng.uniform(0.12, 0.3) * SAMPLE_RATE), total - used)
        if n <= 0:
            break
        if rng.random() < 0.15:
            seg = np.zeros(n)
        else:
            seg = _fade(_vowel(voice, names[int(rng.integers(0, len(names)))], n, rng))
        parts.append(seg)
        used += n
    x = np.concatenate(parts)[:total]
    x += 1e-4 * rng.standard_normal(x.size)  # breath floor; keeps mels off the epsilon floor
    return AudioClip(samples=PEAK * x / np.max(np.abs(x)))


def build_toy_corpus(
    out_dir: str | Path,
    *,
    n_speakers: int = 4,
    utterances_per_speaker: int = 5,
    seconds: float = 1.5,
    degrade_config: DegradeConfig | None = None,
    enrollment_per_utterance: int = 2,
    seed: int = 0,
) -> Path:
    """
    Write clean/degraded WAVs, degradation reports and manifest.jsonl under out_dir.

    Enrollment for each utterance is other clean utterances of the same speaker.
    """
    out = Path(out_dir)
    degrade_config = degrade_config or DegradeConfig()
    seeds = np.random.SeedSequence(seed).generate_state(n_speakers * utterances_per_speaker * 2)

    clean_rel: dict[str, list[str]] = {}
    rows: list[ManifestRow] = []
    j = 0
    for s in range(n_speakers):
        voice = ToyVoice.for_index(s)
        for u in range(utterances_per_speaker):
            utt_id = f"{voice.speaker_id}_u{u:02d}"
            clean = synth_utterance(voice, seconds, int(seeds[j]))
            spec = sample_spec(degrade_config, int(seeds[j + 1]))
            j += 2
            degraded, report = apply_chain(clean, spec)

            clean_path = Path("clean") / f"{utt_id}.wav"
            degraded_path = Path("degraded") / f"{utt_id}.wav"
            write_wav(clean, out / clean_path)
            write_wav(degraded, out / degraded_path)
            (out / degraded_path).with_suffix(".json").write_text(
                report.model_dump_json(indent=2), encoding="utf-8"
            )
            clean_rel.setdefault(voice.speaker_id, []).append(str(clean_path))
            rows.append(
                ManifestRow(
                    utterance_id=utt_id,
                    clean_path=str(clean_path),
                    degraded_path=str(degraded_path),
                    speaker_id=voice.speaker_id,
                )
            )

    for i, row in enumerate(rows):
        others = [p for p in clean_rel[row.speaker_id] if p != row.clean_path]
        rows[i] = row.model_copy(update={"enrollment_paths": others[:enrollment_per_utterance]})

    manifest = write_manifest(rows, out / "manifest.jsonl")
    print(f"✅ Wrote {len(rows)} utterances ({n_speakers} speakers) to: {out}")
    return manifest
