"""Tests for audio containers, mel analysis/synthesis and SNR arithmetic."""

import math

import numpy as np
import pytest
import soundfile as sf

from app.core.errors import (
    EmptyAudio,
    LengthMismatch,
    SampleRateMismatch,
    UnsupportedAudioFormat,
    ZeroNoise,
    ZeroSignal,
)
from app.core.schemas.audio import SAMPLE_RATE, MelConfig, VocoderConfig
from app.ml.signal.audio import AudioClip, read_wav, write_wav
from app.ml.signal.mel import (
    MelSpectrogram,
    griffin_lim,
    magnitude_from_mel,
    mel_filterbank,
    mel_spectrogram,
)
from app.ml.signal.snr import measure_snr, scale_noise_to_snr

from tests.conftest import make_noise, make_tone


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


# ---------------------------------------------------------------------------
# AudioClip and WAV I/O
# ---------------------------------------------------------------------------


class TestAudioClip:
    def test_duration(self):
        assert AudioClip(np.zeros(8000)).duration == pytest.approx(0.5)

    def test_rejects_empty(self):
        with pytest.raises(EmptyAudio):
            AudioClip(np.zeros(0))

    def test_rejects_other_rates(self):
        with pytest.raises(SampleRateMismatch):
            AudioClip(np.zeros(10), sample_rate=22050)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]))

    def test_rejects_stereo(self):
        with pytest.raises(UnsupportedAudioFormat):
            AudioClip(np.zeros((10, 2)))

    def test_samples_are_read_only(self, tone):
        with pytest.raises(ValueError):
            tone.samples[0] = 1.0

    def test_fit_length(self, tone):
        assert len(tone.fit_length(100)) == 100
        padded = tone.fit_length(len(tone) + 50)
        assert np.all(padded.samples[-50:] == 0.0)


class TestWavIO:
    def test_round_trip_within_quantisation(self, tmp_path, tone):
        path = write_wav(tone, tmp_path / "a.wav")
        back = read_wav(path)
        assert len(back) == len(tone)
        assert np.max(np.abs(back.samples - tone.samples)) <= 1.0 / 32768 + 1e-12

    def test_write_clamps(self, tmp_path):
        back = read_wav(write_wav(AudioClip(np.array([2.0, -3.0, 0.5])), tmp_path / "c.wav"))
        assert np.max(np.abs(back.samples)) <= 1.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")

    def test_rejects_stereo(self, tmp_path):
        p = tmp_path / "st.wav"
        sf.write(str(p), np.zeros((100, 2)), SAMPLE_RATE, subtype="PCM_16")
        with pytest.raises(UnsupportedAudioFormat, match="mono"):
            read_wav(p)

    def test_rejects_other_rate(self, tmp_path):
        p = tmp_path / "sr.wav"
        sf.write(str(p), np.zeros(100), 44100, subtype="PCM_16")
        with pytest.raises(UnsupportedAudioFormat, match="16000"):
            read_wav(p)

    def test_rejects_float_subtype(self, tmp_path):
        p = tmp_path / "f.wav"
        sf.write(str(p), np.zeros(100), SAMPLE_RATE, subtype="FLOAT")
        with pytest.raises(UnsupportedAudioFormat):
            read_wav(p)


# ---------------------------------------------------------------------------
# Mel analysis
# ---------------------------------------------------------------------------


class TestMelConfig:
    def test_defaults(self):
        cfg = MelConfig()
        assert (cfg.hop_length, cfg.win_length, cfg.n_fft, cfg.n_mels) == (256, 1024, 1024, 80)
        assert cfg.log_min == pytest.approx(math.log(1e-5))

    def test_geometry_checked(self):
        with pytest.raises(ValueError):
            MelConfig(hop_length=2048)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            MelConfig(hop=256)


class TestMelSpectrogram:
    def test_one_second_shape(self, tone):
        assert mel_spectrogram(tone).values.shape == (63, 80)

    def test_frame_count_sweep(self):
        rng = np.random.default_rng(0)
        lengths = [1024, 1025, 16000, 160000, *rng.integers(1024, 160001, size=12).tolist()]
        for n in lengths:
            mel = mel_spectrogram(make_noise(int(n), seed=int(n)))
            assert mel.frames == 1 + int(n) // 256

    def test_silence_is_floor(self):
        mel = mel_spectrogram(AudioClip(np.zeros(16000)))
        assert np.all(mel.values == np.float32(np.log(1e-5)))

    def test_entries_never_below_floor(self, speechlike):
        assert mel_spectrogram(speechlike).values.min() >= np.float32(np.log(1e-5))

    def test_sine_peaks_in_nearest_band(self):
        mel = mel_spectrogram(make_tone(440.0, amplitude=1.0))
        points = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(8000.0), 82))
        centres = points[1:-1]
        expected = int(np.argmin(np.abs(centres - 440.0)))
        assert np.all(np.argmax(mel.values[2:-2], axis=1) == expected)

    def test_scale_monotone(self, speechlike):
        a = mel_spectrogram(speechlike).values
        b = mel_spectrogram(speechlike.with_samples(2.0 * speechlike.samples)).values
        unfloored = a > np.float32(np.log(1e-5))
        assert np.all(b[unfloored] >= a[unfloored])

    def test_deterministic(self, speechlike):
        assert np.array_equal(mel_spectrogram(speechlike).values, mel_spectrogram(speechlike).values)

    def test_floored_clamps(self):
        cfg = MelConfig()
        mel = MelSpectrogram.floored(np.full((3, 80), -100.0), cfg)
        assert np.all(mel.values == np.float32(cfg.log_min))

    def test_wrong_band_count(self):
        with pytest.raises(ValueError):
            MelSpectrogram(np.zeros((3, 40)))


class TestFilterbank:
    def test_shape_and_non_negative(self):
        fb = mel_filterbank()
        assert fb.shape == (80, 513)
        assert fb.min() >= 0.0

    def test_pinv_beats_transpose(self):
        cfg = MelConfig()
        fb = mel_filterbank(cfg)
        mag = np.abs(np.random.default_rng(1).standard_normal((513, 5))) + 0.1
        mel_amp = fb @ mag
        mel = MelSpectrogram(np.log(mel_amp).T, cfg)
        errors = {}
        for method in ("pinv", "transpose"):
            est = magnitude_from_mel(mel, method)
            assert est.min() >= 0.0
            errors[method] = np.mean(np.abs(fb @ est - mel_amp) / mel_amp)
        assert errors["pinv"] < errors["transpose"]

    def test_transpose_inverts_flat_spectrum(self):
        cfg = MelConfig()
        fb = mel_filterbank(cfg)
        mel = MelSpectrogram(np.log(fb @ np.ones((fb.shape[1], 4))).T, cfg)
        est = magnitude_from_mel(mel, "transpose")
        covered = fb.sum(axis=0) > 0
        np.testing.assert_allclose(est[covered], 1.0, rtol=1e-5)
        assert np.all(est[~covered] == 0.0)

    def test_transpose_is_default(self, tone):
        mel = mel_spectrogram(tone)
        assert np.array_equal(magnitude_from_mel(mel), magnitude_from_mel(mel, "transpose"))
        assert VocoderConfig().inversion == "transpose"

    def test_unknown_inversion(self, tone):
        with pytest.raises(ValueError, match="unknown"):
            magnitude_from_mel(mel_spectrogram(tone), "magic")  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------


class TestGriffinLim:
    def test_default_length(self, tone):
        mel = mel_spectrogram(tone)
        y = griffin_lim(mel, iterations=4)
        assert abs(len(y) - (mel.frames - 1) * 256) <= 256

    def test_explicit_length(self, tone):
        assert len(griffin_lim(mel_spectrogram(tone), iterations=2, length=len(tone))) == len(tone)

    def test_deterministic(self, speechlike):
        mel = mel_spectrogram(speechlike)
        a = griffin_lim(mel, iterations=8, seed=3)
        b = griffin_lim(mel, iterations=8, seed=3)
        assert np.array_equal(a.samples, b.samples)

    def test_floor_mel_is_near_silent(self):
        cfg = MelConfig()
        mel = MelSpectrogram(np.full((63, 80), cfg.log_min), cfg)
        assert griffin_lim(mel, iterations=16).peak < 1e-2

    def test_tone_round_trip_keeps_frequency(self):
        src = make_tone(440.0)
        mel = mel_spectrogram(src)
        y = griffin_lim(mel, iterations=64, seed=0, length=len(src))

        spectrum = np.abs(np.fft.rfft(y.samples * np.hanning(len(y))))
        peak_hz = np.argmax(spectrum) * SAMPLE_RATE / len(y)
        assert 400.0 <= peak_hz <= 480.0

        back = mel_spectrogram(y)
        interior = slice(2, mel.frames - 2)
        match = np.argmax(back.values[interior], axis=1) == np.argmax(mel.values[interior], axis=1)
        assert match.mean() >= 0.9

    def test_rejects_zero_iterations(self, tone):
        with pytest.raises(ValueError):
            griffin_lim(mel_spectrogram(tone), iterations=0)


# ---------------------------------------------------------------------------
# SNR arithmetic
# ---------------------------------------------------------------------------


class TestSnr:
    def test_equal_energy_is_zero_db(self):
        s = np.array([1.0, -1.0, 1.0, -1.0])
        n = np.array([1.0, 1.0, -1.0, -1.0])
        assert measure_snr(s, n) == 0.0

    def test_ten_db(self):
        s = np.array([math.sqrt(10.0), 0.0])
        n = np.array([0.0, 1.0])
        assert measure_snr(s, n) == pytest.approx(10.0, abs=1e-12)

    def test_zero_noise(self):
        with pytest.raises(ZeroNoise):
            measure_snr(np.ones(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            measure_snr(np.ones(4), np.ones(5))

    def test_gain_for_equal_energy(self):
        s = make_noise(1000, seed=1).samples
        n = s[::-1].copy()
        assert scale_noise_to_snr(s, n, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert scale_noise_to_snr(s, n, 20.0) == pytest.approx(0.1, abs=1e-12)

    def test_round_trip_random_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(100, 5000))
            s = rng.standard_normal(n) * rng.uniform(0.01, 1.0)
            noise = rng.standard_normal(n) * rng.uniform(0.01, 1.0)
            target = rng.uniform(-15.0, 40.0)
            g = scale_noise_to_snr(s, noise, target)
            assert abs(measure_snr(s, g * noise) - target) < 1e-6

    def test_silent_signal(self):
        with pytest.raises(ZeroSignal):
            scale_noise_to_snr(np.zeros(4), np.ones(4), 0.0)
