"""Tests for the seeded degradation operators and chains."""

import math

import numpy as np
import pytest

from app.core.errors import DegradationStepError, ParameterOutOfRange, SnrOutOfRange, ZeroNoise
from app.core.schemas.degradation import (
    CANONICAL_ORDER,
    DegradationOp,
    DegradationReport,
    DegradationSpec,
    DegradeConfig,
)
from app.ml.degrade import (
    apply_chain,
    band_limit,
    clip,
    codec_artifact,
    mix_at_snr,
    packet_drop,
    replay_chain,
    reverberate,
    sample_spec,
)
from app.ml.degrade.ops import coloured_noise, loop_noise, mix_with_details, packet_drop_segments, synth_rir
from app.ml.signal.audio import AudioClip
from app.ml.signal.snr import measure_snr

from tests.conftest import make_noise, make_tone


def _zero_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (start, length)."""
    runs, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - start))
            start = None
    if start is not None:
        runs.append((start, len(mask) - start))
    return runs


# ---------------------------------------------------------------------------
# Additive noise
# ---------------------------------------------------------------------------


class TestMixAtSnr:
    def test_zero_db_white(self, speechlike):
        noise = coloured_noise("white", len(speechlike), seed=1)
        _, details = mix_with_details(speechlike, noise, 0.0)
        assert abs(details["realized_snr"]) < 1e-6

    def test_out_of_range(self, speechlike):
        with pytest.raises(SnrOutOfRange):
            mix_at_snr(speechlike, np.ones(len(speechlike)), 45.0)

    def test_zero_noise(self, speechlike):
        with pytest.raises(ZeroNoise):
            mix_at_snr(speechlike, np.zeros(len(speechlike)), 10.0)

    def test_random_triples(self):
        rng = np.random.default_rng(3)
        for i in range(100):
            n = int(rng.integers(800, 8000))
            clean = AudioClip(0.3 * rng.standard_normal(n))
            noise = rng.standard_normal(int(rng.integers(100, 2 * n)))
            snr = float(rng.uniform(-15.0, 40.0))
            offset = int(rng.integers(0, noise.size))
            _, details = mix_with_details(clean, noise, snr, offset=offset)
            assert abs(details["realized_snr"] - snr) < 1e-6
            scaled = details["gain"] * loop_noise(noise, n, offset)
            assert abs(measure_snr(clean, scaled) - snr) < 1e-6

    def test_peak_normalised_and_recorded(self, speechlike):
        loud = coloured_noise("white", len(speechlike), seed=2)
        mixed, details = mix_with_details(speechlike, loud, -15.0)
        assert details["peak_scale"] < 1.0
        assert mixed.peak == pytest.approx(0.99)

    def test_no_renormalisation_when_in_range(self, speechlike):
        _, details = mix_with_details(speechlike, coloured_noise("pink", len(speechlike), 0), 30.0)
        assert details["peak_scale"] == 1.0

    def test_short_noise_is_looped(self):
        looped = loop_noise(np.array([1.0, 2.0, 3.0]), 7, offset=1)
        assert looped.tolist() == [2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0]

    def test_unknown_colour(self):
        with pytest.raises(ParameterOutOfRange):
            coloured_noise("purple", 10, 0)

    @pytest.mark.parametrize("kind", ["white", "pink", "brown"])
    def test_colours_unit_variance(self, kind):
        assert np.std(coloured_noise(kind, 4096, 5)) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Packet loss
# ---------------------------------------------------------------------------


class TestPacketDrop:
    def test_zero_drops_identity(self, speechlike):
        assert np.array_equal(packet_drop(speechlike, 0).samples, speechlike.samples)

    def test_zero_length_identity(self, speechlike):
        out = packet_drop(speechlike, 4, max_len_ms=0.0, seed=1)
        assert np.array_equal(out.samples, speechlike.samples)

    def test_zeroed_spans_match_scanner(self):
        clip_in = AudioClip(0.5 + 0.1 * np.random.default_rng(0).random(16000))
        out = packet_drop(clip_in, 2, max_len_ms=100.0, seed=7)
        expected = np.zeros(16000, dtype=bool)
        for start, length in packet_drop_segments(16000, 2, 100.0, 7):
            expected[start : start + length] = True
        assert _zero_runs(out.samples == 0.0) == _zero_runs(expected)
        assert np.array_equal(out.samples[~expected], clip_in.samples[~expected])

    def test_segment_lengths_bounded(self):
        for seed in range(100):
            for start, length in packet_drop_segments(16000, 5, 100.0, seed):
                assert 0 <= length <= 1600
                assert 0 <= start < 16000
                assert start + length <= 16000

    def test_segments_are_separate_runs(self):
        for seed in range(100):
            segments = packet_drop_segments(16000, 5, 100.0, seed)
            assert segments == sorted(segments)
            for (s0, n0), (s1, _) in zip(segments, segments[1:]):
                assert s0 + n0 < s1

    def test_every_nonzero_drop_is_kept(self):
        clip_in = AudioClip(0.5 + 0.1 * np.random.default_rng(1).random(16000))
        for seed in range(20):
            segments = packet_drop_segments(16000, 5, 100.0, seed)
            out = packet_drop(clip_in, 5, max_len_ms=100.0, seed=seed)
            assert len(segments) == 5
            assert len(_zero_runs(out.samples == 0.0)) == sum(1 for _, n in segments if n > 0)

    def test_crowded_drops_shrink_to_fit(self):
        segments = packet_drop_segments(400, 10, 100.0, 3)
        assert segments
        total = sum(n for _, n in segments)
        assert len(segments) == 10
        assert total <= 400 - 10
        for (s0, n0), (s1, _) in zip(segments, segments[1:]):
            assert s0 + n0 < s1
        assert segments[-1][0] + segments[-1][1] <= 400

    def test_rejects_long_drops(self, speechlike):
        with pytest.raises(ParameterOutOfRange):
            packet_drop(speechlike, 1, max_len_ms=150.0)


# ---------------------------------------------------------------------------
# Clip, band limit, reverb, codec
# ---------------------------------------------------------------------------


class TestOtherOperators:
    def test_clip_unit_threshold_identity(self, speechlike):
        assert np.array_equal(clip(speechlike, 1.0).samples, speechlike.samples)

    def test_clip_level(self, speechlike):
        out = clip(speechlike, 0.5)
        assert out.peak == pytest.approx(0.5 * speechlike.peak)

    def test_clip_rejects_zero(self, speechlike):
        with pytest.raises(ParameterOutOfRange):
            clip(speechlike, 0.0)

    def test_band_limit_removes_high_tone(self):
        src = make_tone(4000.0)
        out = band_limit(src, 2000.0)
        interior = slice(1000, -1000)
        rms_in = np.sqrt(np.mean(src.samples[interior] ** 2))
        rms_out = np.sqrt(np.mean(out.samples[interior] ** 2))
        assert rms_out < 1e-3 * rms_in

    def test_band_limit_passes_low_tone(self):
        src = make_tone(500.0)
        out = band_limit(src, 2000.0)
        interior = slice(1000, -1000)
        assert np.allclose(out.samples[interior], src.samples[interior], atol=1e-3)

    def test_band_limit_rejects_nyquist(self, speechlike):
        with pytest.raises(ParameterOutOfRange):
            band_limit(speechlike, 8000.0)

    def test_reverb_keeps_length(self, speechlike):
        assert len(reverberate(speechlike, 0.4, seed=1)) == len(speechlike)

    def test_rir_decay(self):
        rir = synth_rir(0.3, seed=0)
        assert np.linalg.norm(rir) == pytest.approx(1.0)
        n = rir.size
        head = np.sum(rir[: n // 10] ** 2)
        tail = np.sum(rir[-n // 10 :] ** 2)
        assert tail < 1e-3 * head

    def test_rir_capped(self):
        assert synth_rir(2.0, seed=0).size == 8000

    def test_codec_16_bit_bound(self, speechlike):
        mu = 2**16 - 1
        bound = 2 * (2 / mu) * (1 + mu) * math.log(1 + mu) / mu
        out = codec_artifact(speechlike, 16)
        assert np.max(np.abs(out.samples - speechlike.samples)) <= bound

    def test_codec_coarser_is_worse(self, speechlike):
        err4 = np.max(np.abs(codec_artifact(speechlike, 4).samples - speechlike.samples))
        err12 = np.max(np.abs(codec_artifact(speechlike, 12).samples - speechlike.samples))
        assert err12 < err4

    def test_codec_rejects_bits(self, speechlike):
        with pytest.raises(ParameterOutOfRange):
            codec_artifact(speechlike, 20)


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


def _example_spec(seed: int = 11) -> DegradationSpec:
    return DegradationSpec(
        ops=[
            DegradationOp(kind="band_limit", params={"cutoff": 4000.0}),
            DegradationOp(kind="mix_noise", params={"snr": 5.0, "noise": "pink"}),
            DegradationOp(kind="packet_drop", params={"n_drops": 3}),
        ],
        seed=seed,
    )


class TestChain:
    def test_empty_chain_identity(self, speechlike):
        out, report = apply_chain(speechlike, DegradationSpec(seed=3))
        assert np.array_equal(out.samples, speechlike.samples)
        assert report.steps == []
        assert report.seed == 3

    def test_deterministic(self, speechlike):
        a, ra = apply_chain(speechlike, _example_spec())
        b, rb = apply_chain(speechlike, _example_spec())
        assert np.array_equal(a.samples, b.samples)
        assert ra == rb

    def test_replay_from_report(self, speechlike):
        out, report = apply_chain(speechlike, _example_spec())
        assert np.array_equal(replay_chain(speechlike, report).samples, out.samples)

    def test_replay_after_json(self, speechlike):
        out, report = apply_chain(speechlike, _example_spec())
        restored = DegradationReport.model_validate_json(report.model_dump_json())
        assert np.array_equal(replay_chain(speechlike, restored).samples, out.samples)

    def test_report_records_realised_values(self, speechlike):
        _, report = apply_chain(speechlike, _example_spec())
        kinds = [s.kind for s in report.steps]
        assert kinds == ["band_limit", "mix_noise", "packet_drop"]
        mix = report.steps[1].params
        assert abs(mix["realized_snr"] - 5.0) < 1e-6
        drops = report.steps[2].params
        assert drops["n_drops"] == 3
        assert len(drops["segments"]) == 3
        for (s0, n0), (s1, _) in zip(drops["segments"], drops["segments"][1:]):
            assert s0 + n0 < s1

    def test_different_seed_differs(self, speechlike):
        a, _ = apply_chain(speechlike, _example_spec(1))
        b, _ = apply_chain(speechlike, _example_spec(2))
        assert not np.array_equal(a.samples, b.samples)

    def test_failure_carries_op_index(self):
        silent = AudioClip(np.zeros(1000))
        spec = DegradationSpec(
            ops=[
                DegradationOp(kind="clip", params={"threshold": 0.5}),
                DegradationOp(kind="mix_noise", params={"snr": 0.0}),
            ]
        )
        with pytest.raises(DegradationStepError) as info:
            apply_chain(silent, spec)
        assert info.value.op_index == 1
        assert info.value.kind == "mix_noise"

    def test_wav_noise_source(self, tmp_path, speechlike):
        from app.ml.signal.audio import write_wav

        path = write_wav(make_noise(3000, seed=9), tmp_path / "n.wav")
        spec = DegradationSpec(ops=[DegradationOp(kind="mix_noise", params={"snr": 10.0, "noise": str(path)})])
        out, report = apply_chain(speechlike, spec)
        assert 0 <= report.steps[0].params["offset"] < 3000
        assert np.array_equal(replay_chain(speechlike, report).samples, out.samples)


class TestSpecValidation:
    def test_snr_out_of_range(self):
        with pytest.raises(ValueError, match="snr"):
            DegradationOp(kind="mix_noise", params={"snr": 45.0})

    def test_unknown_param(self):
        with pytest.raises(ValueError, match="unknown"):
            DegradationOp(kind="clip", params={"threshold": 0.5, "knee": 1})

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            DegradationOp(kind="bitcrush", params={})

    def test_json_field_names(self):
        spec = _example_spec()
        data = spec.model_dump()
        assert set(data) == {"ops", "seed"}
        assert set(data["ops"][0]) == {"kind", "params"}


class TestSampling:
    def test_canonical_order(self):
        cfg = DegradeConfig(p_mix_noise=1, p_packet_drop=1, p_clip=1, p_band_limit=1, p_reverb=1, p_codec=1)
        spec = sample_spec(cfg, seed=4)
        assert [op.kind for op in spec.ops] == list(CANONICAL_ORDER)

    def test_deterministic(self):
        assert sample_spec(DegradeConfig(), 9) == sample_spec(DegradeConfig(), 9)

    def test_probabilities_zero(self):
        cfg = DegradeConfig(p_mix_noise=0, p_packet_drop=0, p_clip=0, p_band_limit=0, p_reverb=0, p_codec=0)
        assert sample_spec(cfg, 1).ops == []

    def test_vctk_demand_snrs(self):
        cfg = DegradeConfig.vctk_demand_snrs()
        snrs = {sample_spec(cfg, s).ops[0].params["snr"] for s in range(40)}
        assert snrs <= {2.5, 7.5, 12.5, 17.5}

    def test_severe_preset(self):
        for s in range(20):
            spec = sample_spec(DegradeConfig.severe(), s)
            kinds = [op.kind for op in spec.ops]
            assert kinds == ["packet_drop", "mix_noise"]
            assert -15.0 <= spec.ops[1].params["snr"] <= 0.0
