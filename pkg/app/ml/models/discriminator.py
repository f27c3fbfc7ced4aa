from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from app.core.schemas.training import DiscriminatorConfig
from app.ml.nn.module import TrainableModule, init_weights


class _ScaleDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig) -> None:
        super().__init__()
        layers = []
        ch_in = 1
        for i in range(cfg.layers):
            ch_out = cfg.channels * 2**i
            layers.append(nn.Conv2d(ch_in, ch_out, kernel_size=3, stride=(1, 2), padding=1))
            ch_in = ch_out
        self.layers = nn.ModuleList(layers)
        self.head = nn.Conv2d(ch_in, 1, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        feats = []
        for conv in self.layers:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return self.head(x), feats


class MultiScaleSpectrogramDiscriminator(TrainableModule):
    """Conv discriminators on the log-mel at 1, 1/2, 1/4 ... time resolution."""

    kind = "gsr_discriminator"
    config_cls = DiscriminatorConfig

    def __init__(self, config: DiscriminatorConfig | None = None) -> None:
        config = config or DiscriminatorConfig()
        super().__init__(config)
        self.discriminators = nn.ModuleList(
            [_ScaleDiscriminator(config) for _ in range(config.scales)]
        )
        init_weights(self)

    def forward(self, mel: torch.Tensor) -> list[tuple[torch.Tensor, list[torch.Tensor]]]:
        """mel: (B, T, n_mels). Returns (logits, features) per scale."""
        x = mel[:, None]
        outs = []
        for i, disc in enumerate(self.discriminators):
            if i:
                x = F.avg_pool2d(x, kernel_size=(2, 1), stride=(2, 1), ceil_mode=True)
            outs.append(disc(x))
        return outs
