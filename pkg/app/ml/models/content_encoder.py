from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from app.core.errors import ShapeMismatch, UnitOutOfRange
from app.core.schemas.models import ContentEncoderConfig
from app.ml.models.layers import TransformerBlock, sinusoidal_embedding
from app.ml.nn.module import TrainableModule, init_weights
from app.ml.signal.mel import MelSpectrogram


@dataclass(frozen=True, eq=False)
class CoarseSpectrogram:
    """Content-encoder output M-hat: frames x n_mels, same grid as the mel, unfloored."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim != 2:
            raise ShapeMismatch(f"coarse spectrogram must be 2-D, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])


class _ConvLayer(nn.Module):
    def __init__(self, dim: int, kernel: int) -> None:
        super().__init__()
        self.conv = nn.Conv1d(dim, dim, kernel, padding=kernel // 2, padding_mode="replicate")
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv(x.transpose(1, 2)).transpose(1, 2)
        return F.gelu(self.norm(h))


class ContentEncoder(TrainableModule):
    """
    Unit ids (B, T) -> coarse spectrogram (B, T, n_mels).

    Embedding, a replicate-padded conv + LayerNorm stack (which also carries
    relative position), pre-norm transformer blocks and a linear projection.
    """

    kind = "content_encoder"
    config_cls = ContentEncoderConfig

    def __init__(self, config: ContentEncoderConfig | None = None) -> None:
        config = config or ContentEncoderConfig()
        super().__init__(config)
        c = config
        self.embed = nn.Embedding(c.n_units, c.dim)
        self.convs = nn.ModuleList([_ConvLayer(c.dim, c.kernel_size) for _ in range(c.conv_layers)])
        self.blocks = nn.ModuleList(
            [TransformerBlock(c.dim, c.heads, c.ff_mult) for _ in range(c.transformer_layers)]
        )
        self.norm_out = nn.LayerNorm(c.dim)
        self.proj = nn.Linear(c.dim, c.n_mels)
        init_weights(self)
        nn.init.constant_(self.proj.bias, c.output_bias)

    def forward(self, ids: torch.Tensor, padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.embed(ids)
        for conv in self.convs:
            h = conv(h)
        if self.config.positional_encoding == "sinusoidal":
            pos = torch.arange(h.shape[1], device=h.device, dtype=h.dtype)
            h = h + sinusoidal_embedding(pos, self.config.dim)[None]
        for block in self.blocks:
            h = block(h, padding_mask)
        return self.proj(self.norm_out(h))


def _as_ids(units) -> np.ndarray:
    return np.asarray(getattr(units, "ids", units), dtype=np.int64)


@torch.no_grad()
def content_encode(units, encoder: ContentEncoder) -> CoarseSpectrogram:
    ids = _as_ids(units)
    k = encoder.config.n_units
    if ids.ndim != 1 or ids.size == 0:
        raise ShapeMismatch(f"expected a non-empty 1-D unit sequence, got shape {ids.shape}")
    if ids.min() < 0 or ids.max() >= k:
        raise UnitOutOfRange(f"unit ids must lie in [0, {k}), got [{ids.min()}, {ids.max()}]")
    encoder.eval()
    out = encoder(torch.from_numpy(ids)[None])[0]
    return CoarseSpectrogram(out.cpu().numpy())


def _values(x) -> np.ndarray:
    if isinstance(x, (MelSpectrogram, CoarseSpectrogram)):
        return x.values
    return np.asarray(x)


def enc_loss(m0, m_hat):
    """
    Mean absolute difference between target mel and coarse spectrogram.

    Tensors in, tensor out (for training); anything else returns a float.
    """
    if isinstance(m0, torch.Tensor) and isinstance(m_hat, torch.Tensor):
        if m0.shape != m_hat.shape:
            raise ShapeMismatch(f"enc_loss shapes differ: {tuple(m0.shape)} vs {tuple(m_hat.shape)}")
        return F.l1_loss(m_hat, m0)
    a = _values(m0).astype(np.float64)
    b = _values(m_hat).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"enc_loss shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))
