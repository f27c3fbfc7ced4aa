from __future__ import annotations

import torch

from app.core.errors import ShapeMismatch
from app.core.schemas.audio import MelConfig
from app.ml.inference.vocoder import Vocoder, build_vocoder
from app.ml.models.resunet import ResUNet
from app.ml.signal.audio import AudioClip
from app.ml.signal.mel import MelSpectrogram, mel_spectrogram


@torch.no_grad()
def gsr_forward(model: ResUNet, x_mel: MelSpectrogram) -> MelSpectrogram:
    """Restored log-mel = x + residual(x), floored back into the valid log range."""
    if x_mel.values.shape[1] != model.config.n_mels:
        raise ShapeMismatch(
            f"model expects {model.config.n_mels} mel bands, got {x_mel.values.shape[1]}"
        )
    model.eval()
    out = model(torch.from_numpy(x_mel.values.copy())[None])[0]
    return MelSpectrogram.floored(out.numpy(), x_mel.config)


def gsr_enhance(
    model: ResUNet,
    audio: AudioClip,
    vocoder: Vocoder | None = None,
    *,
    mel_config: MelConfig | None = None,
    length: int | None = None,
) -> AudioClip:
    """vocoder(gsr_forward(mel(audio))); output length defaults to the input's."""
    vocoder = vocoder or build_vocoder()
    restored = gsr_forward(model, mel_spectrogram(audio, mel_config or MelConfig()))
    return vocoder(restored, length=len(audio) if length is None else length)
