from __future__ import annotations

import torch
from torch import nn

from app.core.schemas.diffusion import GuidanceConfig


def _flags(b: int, keep: bool) -> torch.Tensor:
    return torch.full((b,), keep, dtype=torch.bool)


def guided_score(
    net: nn.Module,
    m_t: torch.Tensor,
    t: torch.Tensor | float,
    m_hat: torch.Tensor,
    spk: torch.Tensor,
    g: GuidanceConfig,
) -> torch.Tensor:
    """
    Classifier-free guided noise prediction:

        e00 + lc (eC0 - e00) + ls (eCS - eC0)

    with e00 = e(null, null), eC0 = e(content, null), eCS = e(content, speaker).
    Evaluated as (1 - lc) e00 + (lc - ls) eC0 + ls eCS, left to right, so the
    (lc, ls) corners (0, 0), (1, 0) and (1, 1) return one prediction exactly.
    Predictions whose weight is exactly zero are not computed.
    """
    b = m_t.shape[0]
    lc, ls = float(g.content_scale), float(g.speaker_scale)
    weights = ((1.0 - lc, False, False), (lc - ls, True, False), (ls, True, True))

    out: torch.Tensor | None = None
    for w, keep_c, keep_s in weights:
        if w == 0.0:
            continue
        term = w * net(m_t, t, m_hat, spk, _flags(b, keep_c), _flags(b, keep_s))
        out = term if out is None else out + term
    assert out is not None  # weights sum to 1
    return out
