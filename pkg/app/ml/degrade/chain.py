from __future__ import annotations

import logging
from typing import Any

import numpy as np

from app.core.errors import DegradationStepError
from app.core.schemas.degradation import (
    MAX_DROP_MS,
    SYNTHETIC_NOISES,
    AppliedOp,
    DegradationOp,
    DegradationReport,
    DegradationSpec,
)
from app.ml.degrade import ops
from app.ml.signal.audio import AudioClip

logger = logging.getLogger(__name__)


def _op_rngs(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def _draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _realise(op: DegradationOp, audio: AudioClip, rng: np.random.Generator) -> dict[str, Any]:
    """Draw every random quantity an operator needs; the result replays without an RNG."""
    p = op.params
    if op.kind == "mix_noise":
        source = str(p.get("noise", "white"))
        noise_seed = _draw_seed(rng)
        if source in SYNTHETIC_NOISES:
            length = len(audio)
        else:
            length = len(ops.load_noise(source, len(audio), noise_seed))
        return {
            "snr": float(p["snr"]),
            "noise": source,
            "noise_seed": noise_seed,
            "offset": int(rng.integers(0, length)),
        }
    if op.kind == "packet_drop":
        max_len = float(p.get("max_len_ms", MAX_DROP_MS))
        segments = ops.packet_drop_segments(len(audio), int(p["n_drops"]), max_len, _draw_seed(rng))
        return {"n_drops": int(p["n_drops"]), "max_len_ms": max_len, "segments": [[s, n] for s, n in segments]}
    if op.kind == "clip":
        thr = float(p["threshold"])
        return {"threshold": thr, "level": thr * audio.peak}
    if op.kind == "band_limit":
        cutoff = float(p["cutoff"])
        return {"cutoff": cutoff, "numtaps": int(ops.design_lowpass(cutoff).size)}
    if op.kind == "reverb":
        return {"rt60": float(p["rt60"]), "rir_seed": _draw_seed(rng)}
    if op.kind == "codec":
        return {"bits": int(p["bits"])}
    raise ValueError(f"unknown degradation kind: {op.kind}")


def _execute(kind: str, params: dict[str, Any], audio: AudioClip) -> tuple[AudioClip, dict[str, Any]]:
    """Apply one operator from fully realised parameters."""
    if kind == "mix_noise":
        noise = ops.load_noise(params["noise"], len(audio), int(params["noise_seed"]))
        mixed, details = ops.mix_with_details(
            audio, noise, float(params["snr"]), offset=int(params["offset"])
        )
        return mixed, {**params, **details}
    if kind == "packet_drop":
        return ops.zero_segments(audio, params["segments"]), params
    if kind == "clip":
        return ops.clip(audio, float(params["threshold"])), params
    if kind == "band_limit":
        return ops.band_limit(audio, float(params["cutoff"])), params
    if kind == "reverb":
        return ops.reverberate(audio, float(params["rt60"]), int(params["rir_seed"])), params
    if kind == "codec":
        return ops.codec_artifact(audio, int(params["bits"])), params
    raise ValueError(f"unknown degradation kind: {kind}")


def apply_chain(clean: AudioClip, spec: DegradationSpec) -> tuple[AudioClip, DegradationReport]:
    """
    Apply spec.ops in order. Each operator gets its own RNG spawned from spec.seed,
    so inserting an op never reshuffles the draws of the ones before it.
    """
    report = DegradationReport(seed=spec.seed)
    audio = clean
    for i, (op, rng) in enumerate(zip(spec.ops, _op_rngs(spec.seed, len(spec.ops)))):
        try:
            realised = _realise(op, audio, rng)
            audio, recorded = _execute(op.kind, realised, audio)
        except Exception as e:
            raise DegradationStepError(i, op.kind, e) from e
        report.steps.append(AppliedOp(kind=op.kind, params=recorded))
        logger.debug("degrade op #%d %s %s", i, op.kind, recorded)
    return audio, report


def replay_chain(clean: AudioClip, report: DegradationReport) -> AudioClip:
    """Re-apply a report's realised parameters; no random draws."""
    audio = clean
    for i, step in enumerate(report.steps):
        try:
            audio, _ = _execute(step.kind, dict(step.params), audio)
        except Exception as e:
            raise DegradationStepError(i, step.kind, e) from e
    return audio
