"""Tests for the mel restoration network, its loss and training loop."""

import numpy as np
import pandas as pd
import pytest
import torch

from app.core.errors import ConfigError, EmptyManifest, ShapeMismatch
from app.core.schemas.audio import VocoderConfig
from app.core.schemas.training import DiscriminatorConfig, GsrLossConfig, OptimizerConfig
from app.ml.datasets.build_dataset import build_toy_corpus
from app.ml.datasets.manifest import load_manifest
from app.ml.inference.gsr import gsr_enhance, gsr_forward
from app.ml.inference.vocoder import build_vocoder
from app.ml.models.discriminator import MultiScaleSpectrogramDiscriminator
from app.ml.models.resunet import ResUNet
from app.ml.nn.checkpoint import load_checkpoint
from app.ml.nn.training import OptimizerState, train_step
from app.ml.signal.audio import read_wav
from app.ml.signal.mel import MelSpectrogram, mel_spectrogram
from app.ml.training.train_gsr import GSR_LOG_COLUMNS, gsr_loss, train_gsr


def _short_run(**overrides) -> OptimizerConfig:
    return OptimizerConfig(**{"kind": "adamw", "learning_rate": 1e-3, "batch_size": 2, "epochs": 2, **overrides})


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class TestResUNet:
    def test_fresh_model_is_identity(self, tiny_resunet_cfg):
        x = torch.randn(2, 37, 80, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            assert torch.equal(ResUNet(tiny_resunet_cfg)(x), x)

    def test_odd_lengths_keep_shape(self, tiny_resunet_cfg):
        model = ResUNet(tiny_resunet_cfg)
        for frames in (1, 3, 63, 64, 65):
            with torch.no_grad():
                assert model.residual(torch.zeros(1, frames, 80)).shape == (1, frames, 80)

    def test_rejects_wrong_band_count(self, tiny_resunet_cfg):
        with pytest.raises(ShapeMismatch):
            ResUNet(tiny_resunet_cfg)(torch.zeros(1, 10, 40))


class TestGsrForward:
    def test_one_second_shape(self, tiny_resunet_cfg, speechlike):
        out = gsr_forward(ResUNet(tiny_resunet_cfg), mel_spectrogram(speechlike))
        assert isinstance(out, MelSpectrogram)
        assert out.values.shape == (63, 80)

    def test_fresh_model_returns_input(self, tiny_resunet_cfg, speechlike):
        mel = mel_spectrogram(speechlike)
        assert np.array_equal(gsr_forward(ResUNet(tiny_resunet_cfg), mel).values, mel.values)

    def test_enhance_with_zero_residual_is_vocoder_round_trip(self, tiny_resunet_cfg, speechlike):
        vocoder = build_vocoder(VocoderConfig(iterations=4))
        out = gsr_enhance(ResUNet(tiny_resunet_cfg), speechlike, vocoder)
        expected = vocoder(mel_spectrogram(speechlike), length=len(speechlike))
        assert len(out) == len(speechlike)
        assert np.array_equal(out.samples, expected.samples)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


class TestGsrLoss:
    def test_identical_is_zero(self):
        x = torch.randn(10, 80)
        parts = gsr_loss(x, x.clone())
        assert float(parts["mel"]) == 0.0
        assert float(parts["total"]) == 0.0

    def test_unit_offset(self):
        x = torch.zeros(4, 80)
        parts = gsr_loss(x + 1.0, x, GsrLossConfig(mel_weight=45.0))
        assert float(parts["mel"]) == pytest.approx(1.0)
        assert float(parts["total"]) == pytest.approx(45.0)

    def test_matches_elementwise_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((7, 80)), rng.standard_normal((7, 80))
        expected = 0.0
        for i in range(7):
            for j in range(80):
                expected += abs(a[i, j] - b[i, j])
        expected /= 7 * 80
        got = gsr_loss(torch.from_numpy(a), torch.from_numpy(b))["mel"]
        assert float(got) == pytest.approx(expected, rel=1e-12)

    def test_accepts_mel_spectrograms(self, speechlike, tone):
        a, b = mel_spectrogram(speechlike), mel_spectrogram(tone)
        expected = np.mean(np.abs(a.values.astype(np.float64) - b.values))
        assert float(gsr_loss(a, b)["mel"]) == pytest.approx(expected, rel=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            gsr_loss(torch.zeros(3, 80), torch.zeros(4, 80))

    def test_adversarial_terms(self):
        torch.manual_seed(0)
        disc = MultiScaleSpectrogramDiscriminator(DiscriminatorConfig(scales=2, channels=4, layers=2))
        cfg = GsrLossConfig(adversarial_enabled=True, fm_weight=2.0)
        target = torch.randn(1, 16, 80)

        same = gsr_loss(target.clone(), target, cfg, disc)
        assert float(same["fm"]) == 0.0
        assert float(same["adv"]) >= 0.0

        parts = gsr_loss(target + 0.5, target, cfg, disc)
        assert float(parts["fm"]) > 0.0
        expected = cfg.mel_weight * parts["mel"] + parts["adv"] + cfg.fm_weight * parts["fm"]
        assert float(parts["total"]) == pytest.approx(float(expected))

    def test_adversarial_needs_discriminator(self):
        with pytest.raises(ConfigError, match="discriminator"):
            gsr_loss(torch.ones(3, 80), torch.zeros(3, 80), GsrLossConfig(adversarial_enabled=True))

    def test_discriminator_unused_when_disabled(self):
        disc = MultiScaleSpectrogramDiscriminator(DiscriminatorConfig(scales=2, channels=4, layers=2))
        parts = gsr_loss(torch.ones(1, 16, 80), torch.zeros(1, 16, 80), GsrLossConfig(), disc)
        assert float(parts["adv"]) == 0.0
        assert float(parts["fm"]) == 0.0


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class TestTraining:
    def test_overfits_single_pair(self, tiny_resunet_cfg):
        torch.manual_seed(0)
        x = torch.randn(1, 32, 80) - 5.0
        y = x + 0.5
        model = ResUNet(tiny_resunet_cfg)
        state = OptimizerState.create(model.parameters(), OptimizerConfig(kind="adam", learning_rate=3e-3, decay_gamma=None))

        def loss_fn(m, batch):
            return gsr_loss(m(batch[0]), batch[1])["mel"]

        first = float(loss_fn(model, (x, y)))
        for _ in range(300):
            train_step(model, (x, y), loss_fn, state)
        with torch.no_grad():
            last = float(loss_fn(model, (x, y)))
        assert first == pytest.approx(0.5)
        assert last < 0.5 * first

    def test_log_and_outputs(self, tmp_path, toy_rows, tiny_resunet_cfg):
        model, log = train_gsr(
            toy_rows, tiny_resunet_cfg, optimizer_cfg=_short_run(), seed=0, segment_frames=16, out_dir=tmp_path
        )
        assert list(log.columns) == GSR_LOG_COLUMNS
        assert list(log["epoch"]) == [0, 1]
        assert log["lr"].iloc[0] == pytest.approx(1e-3)
        assert np.all(np.isfinite(log["mel_loss"]))
        assert np.all(log["adv_loss"] == 0.0)
        assert not model.training

        back = load_checkpoint(tmp_path / "gsr.ckpt", expected_kind="gsr_resunet", expected_config_hash=model.config_hash())
        for k, v in model.state_dict().items():
            assert torch.equal(back.state_dict()[k], v)
        pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "gsr_train_log.csv"), log, check_dtype=False)

    def test_same_seed_same_model(self, toy_rows, tiny_resunet_cfg):
        runs = [
            train_gsr(toy_rows, tiny_resunet_cfg, optimizer_cfg=_short_run(), seed=5, segment_frames=16)
            for _ in range(2)
        ]
        (a, log_a), (b, log_b) = runs
        pd.testing.assert_frame_equal(log_a, log_b)
        for k, v in a.state_dict().items():
            assert torch.equal(b.state_dict()[k], v)

    def test_adversarial_training_logs_terms(self, toy_rows, tiny_resunet_cfg):
        loss_cfg = GsrLossConfig(adversarial_enabled=True, discriminator=DiscriminatorConfig(scales=2, channels=4, layers=2))
        _, log = train_gsr(toy_rows, tiny_resunet_cfg, loss_cfg, _short_run(epochs=1), seed=0, segment_frames=16)
        assert log["adv_loss"].iloc[0] > 0.0
        assert log["fm_loss"].iloc[0] > 0.0

    def test_rows_without_degraded_clip(self, toy_rows, tiny_resunet_cfg):
        rows = [toy_rows[0].model_copy(update={"degraded_path": None})]
        with pytest.raises(EmptyManifest):
            train_gsr(rows, tiny_resunet_cfg, optimizer_cfg=_short_run())

    def test_empty_rows(self, tiny_resunet_cfg):
        with pytest.raises(EmptyManifest):
            train_gsr([], tiny_resunet_cfg, optimizer_cfg=_short_run())


def _mel_l1(a: MelSpectrogram, b: MelSpectrogram) -> float:
    return float(np.mean(np.abs(a.values.astype(np.float64) - b.values.astype(np.float64))))


@pytest.mark.slow
def test_restores_held_out_utterances(tmp_path_factory, tiny_resunet_cfg):
    rows = load_manifest(
        build_toy_corpus(tmp_path_factory.mktemp("gsr_split"), n_speakers=2, utterances_per_speaker=8, seconds=1.0, seed=7)
    )
    train = [r for i, r in enumerate(rows) if i % 4 != 3]
    held_out = [r for i, r in enumerate(rows) if i % 4 == 3]
    opt = OptimizerConfig(kind="adam", learning_rate=3e-3, decay_gamma=None, batch_size=4, epochs=40)
    model, _ = train_gsr(train, tiny_resunet_cfg, optimizer_cfg=opt, seed=0, segment_frames=32)

    before, after = [], []
    for r in held_out:
        clean = mel_spectrogram(read_wav(r.clean_path))
        degraded = mel_spectrogram(read_wav(r.degraded_path))
        before.append(_mel_l1(clean, degraded))
        after.append(_mel_l1(clean, gsr_forward(model, degraded)))
    assert np.mean(after) < np.mean(before)
