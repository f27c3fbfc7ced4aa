from app.ml.degrade.chain import apply_chain, replay_chain
from app.ml.degrade.ops import (
    band_limit,
    clip,
    codec_artifact,
    mix_at_snr,
    packet_drop,
    reverberate,
)
from app.ml.degrade.sampling import sample_spec

__all__ = [
    "apply_chain",
    "replay_chain",
    "sample_spec",
    "mix_at_snr",
    "packet_drop",
    "clip",
    "band_limit",
    "reverberate",
    "codec_artifact",
]
