from __future__ import annotations

import numpy as np

from app.core.schemas.degradation import (
    CANONICAL_ORDER,
    DegradationOp,
    DegradationSpec,
    DegradeConfig,
    Range,
)


def _uniform(rng: np.random.Generator, r: Range) -> float:
    return float(rng.uniform(r.low, r.high)) if r.high > r.low else float(r.low)


def _integer(rng: np.random.Generator, r: Range) -> int:
    return int(rng.integers(int(r.low), int(r.high) + 1))


def sample_spec(config: DegradeConfig, seed: int) -> DegradationSpec:
    """Draw one per-utterance degradation chain; operator order is CANONICAL_ORDER."""
    rng = np.random.default_rng(seed)
    chosen: list[DegradationOp] = []
    for kind in CANONICAL_ORDER:
        # one coin per kind, drawn even at probability 0 or 1
        if rng.random() >= config.probability(kind):
            continue
        if kind == "reverb":
            params = {"rt60": _uniform(rng, config.rt60_s)}
        elif kind == "band_limit":
            params = {"cutoff": _uniform(rng, config.cutoff_hz)}
        elif kind == "clip":
            params = {"threshold": _uniform(rng, config.clip_threshold)}
        elif kind == "codec":
            params = {"bits": _integer(rng, config.codec_bits)}
        elif kind == "packet_drop":
            params = {"n_drops": _integer(rng, config.n_drops), "max_len_ms": config.drop_max_ms}
        else:
            if config.snr_choices:
                snr = float(config.snr_choices[int(rng.integers(0, len(config.snr_choices)))])
            else:
                snr = _uniform(rng, config.snr_db)
            noise = config.noise_kinds[int(rng.integers(0, len(config.noise_kinds)))]
            params = {"snr": snr, "noise": noise}
        chosen.append(DegradationOp(kind=kind, params=params))

    op_seed = int(rng.integers(0, 2**63 - 1))
    return DegradationSpec(ops=chosen, seed=op_seed)
