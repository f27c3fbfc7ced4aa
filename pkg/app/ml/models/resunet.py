from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from app.core.errors import ShapeMismatch
from app.core.schemas.models import ResUNetConfig
from app.ml.models.layers import (
    Downsample2d,
    ResBlock2d,
    Upsample2d,
    crop_to,
    group_count,
    pad_to_multiple,
)
from app.ml.nn.module import TrainableModule, init_weights, zero_init


class ResUNet(TrainableModule):
    """
    Mel restoration network: (B, T, n_mels) log-mel -> restored log-mel.

    The network predicts an additive correction; its output conv starts at
    zero, so a fresh model returns its input unchanged.
    """

    kind = "gsr_resunet"
    config_cls = ResUNetConfig

    def __init__(self, config: ResUNetConfig | None = None) -> None:
        config = config or ResUNetConfig()
        super().__init__(config)
        c = config
        self.conv_in = nn.Conv2d(1, c.channels(0), kernel_size=3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = c.channels(0)
        for stage in range(c.depth):
            out = c.channels(stage)
            blocks = []
            for _ in range(c.blocks_per_stage):
                blocks.append(ResBlock2d(ch, out))
                ch = out
            self.down_blocks.append(nn.ModuleList(blocks))
            self.downsamples.append(Downsample2d(ch))

        bottom = c.channels(c.depth)
        self.mid = nn.ModuleList(
            [ResBlock2d(ch if i == 0 else bottom, bottom) for i in range(c.blocks_per_stage)]
        )
        ch = bottom

        self.upsamples = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for stage in reversed(range(c.depth)):
            skip = c.channels(stage)
            self.upsamples.append(Upsample2d(ch, skip))
            blocks = [ResBlock2d(2 * skip, skip)]
            blocks += [ResBlock2d(skip, skip) for _ in range(c.blocks_per_stage - 1)]
            self.up_blocks.append(nn.ModuleList(blocks))
            ch = skip

        self.norm_out = nn.GroupNorm(group_count(ch), ch)
        self.conv_out = nn.Conv2d(ch, 1, kernel_size=3, padding=1)

        init_weights(self)
        zero_init(self.conv_out)

    def residual(self, x: torch.Tensor) -> torch.Tensor:
        """Correction term for (B, T, n_mels) input; same shape."""
        h, size = pad_to_multiple(x[:, None], self.config.multiple)
        h = self.conv_in(h)
        skips = []
        for blocks, down in zip(self.down_blocks, self.downsamples):
            for block in blocks:
                h = block(h)
            skips.append(h)
            h = down(h)
        for block in self.mid:
            h = block(h)
        for up, blocks in zip(self.upsamples, self.up_blocks):
            h = torch.cat([up(h), skips.pop()], dim=1)
            for block in blocks:
                h = block(h)
        h = self.conv_out(F.leaky_relu(self.norm_out(h), 0.2))
        return crop_to(h, size)[:, 0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 3 or x.shape[-1] != self.config.n_mels:
            raise ShapeMismatch(f"expected (B, T, {self.config.n_mels}), got {tuple(x.shape)}")
        return x + self.residual(x)
