from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from app.core.errors import ShapeMismatch
from app.core.schemas.models import ScoreNetConfig
from app.ml.models.layers import (
    Downsample2d,
    ResBlock2d,
    SelfAttention2d,
    Upsample2d,
    crop_to,
    group_count,
    pad_to_multiple,
    sinusoidal_embedding,
)
from app.ml.nn.module import TrainableModule, init_weights, zero_init

TIME_SCALE = 1000.0


class ScoreNetwork(TrainableModule):
    """
    Noise predictor e(M_t, t | M-hat, s) over (B, T, n_mels) grids.

    M_t and the coarse spectrogram are stacked as two input channels. The
    time embedding and a per-block projection of the speaker embedding are
    broadcast-added inside every residual block. Dropped conditions are
    replaced by the learned `null_content` / `null_speaker` vectors.
    """

    kind = "score_net"
    config_cls = ScoreNetConfig

    def __init__(self, config: ScoreNetConfig | None = None) -> None:
        config = config or ScoreNetConfig()
        super().__init__(config)
        c = config
        self.null_content = nn.Parameter(torch.zeros(c.n_mels))
        self.null_speaker = nn.Parameter(torch.zeros(c.speaker_dim))

        self.time_mlp = nn.Sequential(
            nn.Linear(c.time_dim, 4 * c.time_dim),
            nn.SiLU(),
            nn.Linear(4 * c.time_dim, c.time_dim),
        )
        conds = (c.time_dim, c.speaker_dim)
        widths = [c.base_channels * 2**i for i in range(c.levels)]

        self.conv_in = nn.Conv2d(2, widths[0], kernel_size=3, padding=1)
        self.down = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = widths[0]
        for level, w in enumerate(widths):
            blocks = []
            for _ in range(c.blocks_per_level):
                blocks.append(ResBlock2d(ch, w, conds))
                ch = w
            self.down.append(nn.ModuleList(blocks))
            if level < c.levels - 1:
                self.downsamples.append(Downsample2d(ch))

        self.mid1 = ResBlock2d(ch, ch, conds)
        self.mid_attn = SelfAttention2d(ch, c.attention_heads)
        self.mid2 = ResBlock2d(ch, ch, conds)

        self.up = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(c.levels)):
            w = widths[level]
            blocks = [ResBlock2d(ch + w, w, conds)]
            blocks += [ResBlock2d(w, w, conds) for _ in range(c.blocks_per_level - 1)]
            self.up.append(nn.ModuleList(blocks))
            ch = w
            if level > 0:
                self.upsamples.append(Upsample2d(ch, widths[level - 1]))
                ch = widths[level - 1]

        self.norm_out = nn.GroupNorm(group_count(ch), ch)
        self.conv_out = nn.Conv2d(ch, 1, kernel_size=3, padding=1)

        init_weights(self)
        zero_init(self.conv_out)

    def forward(
        self,
        m_t: torch.Tensor,
        t: torch.Tensor,
        m_hat: torch.Tensor,
        spk: torch.Tensor,
        keep_content: torch.Tensor | None = None,
        keep_speaker: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """
        m_t, m_hat: (B, T, n_mels); t: (B,) or scalar; spk: (B, speaker_dim).
        keep_*: (B,) bool, False selects the null embedding for that item.
        """
        if m_t.shape != m_hat.shape or m_t.ndim != 3 or m_t.shape[-1] != self.config.n_mels:
            raise ShapeMismatch(
                f"score net expects matching (B, T, {self.config.n_mels}) inputs, "
                f"got {tuple(m_t.shape)} and {tuple(m_hat.shape)}"
            )
        b = m_t.shape[0]
        t = torch.as_tensor(t, dtype=m_t.dtype, device=m_t.device).reshape(-1).expand(b)
        spk = spk.to(m_t.dtype).reshape(b, -1)

        if keep_content is not None:
            null = self.null_content.to(m_t.dtype)[None, None, :].expand_as(m_hat)
            m_hat = torch.where(keep_content.reshape(b, 1, 1), m_hat, null)
        if keep_speaker is not None:
            null = self.null_speaker.to(m_t.dtype)[None, :].expand_as(spk)
            spk = torch.where(keep_speaker.reshape(b, 1), spk, null)

        temb = self.time_mlp(sinusoidal_embedding(t * TIME_SCALE, self.config.time_dim))

        x, size = pad_to_multiple(torch.stack([m_t, m_hat], dim=1), self.config.multiple)
        h = self.conv_in(x)
        skips = []
        for level, blocks in enumerate(self.down):
            for block in blocks:
                h = block(h, temb, spk)
            skips.append(h)
            if level < len(self.downsamples):
                h = self.downsamples[level](h)

        h = self.mid2(self.mid_attn(self.mid1(h, temb, spk)), temb, spk)

        for i, blocks in enumerate(self.up):
            h = torch.cat([h, skips.pop()], dim=1)
            for block in blocks:
                h = block(h, temb, spk)
            if i < len(self.upsamples):
                h = self.upsamples[i](h)

        out = self.conv_out(F.silu(self.norm_out(h)))
        return crop_to(out, size)[:, 0]
