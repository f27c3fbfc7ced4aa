from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def group_count(channels: int, preferred: int = 8) -> int:
    return math.gcd(preferred, channels)


def pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Replicate-pad the last two axes of (B, C, T, F) up to multiples of `multiple`."""
    t, f = x.shape[-2:]
    pt = (-t) % multiple
    pf = (-f) % multiple
    if pt or pf:
        x = F.pad(x, (0, pf, 0, pt), mode="replicate")
    return x, (t, f)


def crop_to(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return x[..., : size[0], : size[1]]


class ResBlock2d(nn.Module):
    """
    GroupNorm -> LeakyReLU -> conv, twice, with a 1x1 shortcut when widths differ.

    Optional conditioning vectors are each mapped to `out_ch` and broadcast-added
    after the first conv.
    """

    def __init__(self, in_ch: int, out_ch: int, cond_dims: tuple[int, ...] = ()) -> None:
        super().__init__()
        self.norm1 = nn.GroupNorm(group_count(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)
        self.norm2 = nn.GroupNorm(group_count(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, kernel_size=3, padding=1)
        self.cond = nn.ModuleList([nn.Linear(d, out_ch) for d in cond_dims])
        self.shortcut = nn.Conv2d(in_ch, out_ch, kernel_size=1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, *conds: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.leaky_relu(self.norm1(x), 0.2))
        for proj, c in zip(self.cond, conds):
            h = h + proj(c)[:, :, None, None]
        h = self.conv2(F.leaky_relu(self.norm2(h), 0.2))
        return self.shortcut(x) + h


class Downsample2d(nn.Module):
    def __init__(self, ch: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(ch, ch, kernel_size=3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.interpolate(x, scale_factor=2.0, mode="nearest"))


class SelfAttention2d(nn.Module):
    """Multi-head attention over all (time, freq) positions of a feature map."""

    def __init__(self, ch: int, heads: int) -> None:
        super().__init__()
        while ch % heads:
            heads -= 1
        self.norm = nn.GroupNorm(group_count(ch), ch)
        self.attn = nn.MultiheadAttention(ch, heads, batch_first=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, t, f = x.shape
        h = self.norm(x).flatten(2).transpose(1, 2)
        h, _ = self.attn(h, h, h, need_weights=False)
        return x + h.transpose(1, 2).reshape(b, c, t, f)


def sinusoidal_embedding(x: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """(N,) positions or times -> (N, dim) sin/cos features."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=x.dtype, device=x.device) / max(half, 1)
    )
    args = x[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class TransformerBlock(nn.Module):
    """Pre-norm self-attention + GELU feed-forward, both residual."""

    def __init__(self, dim: int, heads: int, ff_mult: int = 4) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(
            nn.Linear(dim, ff_mult * dim),
            nn.GELU(),
            nn.Linear(ff_mult * dim, dim),
        )

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.norm1(x)
        h, _ = self.attn(h, h, h, key_padding_mask=padding_mask, need_weights=False)
        x = x + h
        return x + self.ff(self.norm2(x))
