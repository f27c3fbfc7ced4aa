"""Shared fixtures: synthetic signals, tiny model configs and a seeded toy corpus."""

from pathlib import Path

import numpy as np
import pytest
import torch

from app.core.schemas.audio import SAMPLE_RATE, MelConfig
from app.core.schemas.degradation import DegradeConfig
from app.core.schemas.models import (
    ContentEncoderConfig,
    ResUNetConfig,
    ScoreNetConfig,
    SpeakerEncoderConfig,
)
from app.ml.datasets.build_dataset import build_toy_corpus
from app.ml.datasets.manifest import load_manifest
from app.ml.signal.audio import AudioClip


def make_tone(freq: float = 440.0, seconds: float = 1.0, amplitude: float = 0.5) -> AudioClip:
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t))


def make_noise(n: int, seed: int = 0, scale: float = 0.1) -> AudioClip:
    return AudioClip(scale * np.random.default_rng(seed).standard_normal(n))


@pytest.fixture
def tone() -> AudioClip:
    return make_tone()


@pytest.fixture
def speechlike() -> AudioClip:
    """Harmonic tone with a slow amplitude envelope, 1 s."""
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    x = sum(np.sin(2 * np.pi * 150 * k * t) / k for k in range(1, 12))
    env = 0.5 + 0.5 * np.sin(2 * np.pi * 3 * t)
    return AudioClip(0.3 * env * x / np.max(np.abs(x)))


@pytest.fixture
def mel_config() -> MelConfig:
    return MelConfig()


@pytest.fixture
def tiny_resunet_cfg() -> ResUNetConfig:
    return ResUNetConfig(depth=2, base_channels=4, max_channels=8, blocks_per_stage=1)


@pytest.fixture
def tiny_score_cfg() -> ScoreNetConfig:
    return ScoreNetConfig(base_channels=8, levels=2, blocks_per_level=1, time_dim=16, speaker_dim=16, attention_heads=2)


@pytest.fixture
def tiny_encoder_cfg() -> ContentEncoderConfig:
    return ContentEncoderConfig(n_units=8, dim=16, conv_layers=1, kernel_size=3, transformer_layers=1, heads=2, ff_mult=2)


@pytest.fixture
def tiny_speaker_cfg() -> SpeakerEncoderConfig:
    return SpeakerEncoderConfig(dim=16, n_speakers=2)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory) -> Path:
    """2 speakers x 3 utterances of 1 s, mild degradations."""
    out = tmp_path_factory.mktemp("toy")
    return build_toy_corpus(out, n_speakers=2, utterances_per_speaker=3, seconds=1.0, degrade_config=DegradeConfig(), seed=0)


@pytest.fixture(scope="session")
def toy_rows(toy_corpus):
    return load_manifest(toy_corpus)
