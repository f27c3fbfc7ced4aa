from __future__ import annotations

import torch
from torch import nn

from app.core.schemas.models import ProjectionConfig
from app.ml.nn.module import TrainableModule


class MelProjection(TrainableModule):
    """Linear n_mels -> n_mels map standing in for the content encoder (mel-conditioned VC)."""

    kind = "mel_projection"
    config_cls = ProjectionConfig

    def __init__(self, config: ProjectionConfig | None = None) -> None:
        config = config or ProjectionConfig()
        super().__init__(config)
        self.linear = nn.Linear(config.n_mels, config.n_mels)
        with torch.no_grad():
            self.linear.weight.copy_(torch.eye(config.n_mels))
            self.linear.bias.zero_()

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        return self.linear(mel)
