from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.schemas.audio import SAMPLE_RATE

OpKind = Literal["mix_noise", "packet_drop", "clip", "band_limit", "reverb", "codec"]

SNR_RANGE = (-15.0, 40.0)
MAX_DROP_MS = 100.0
CODEC_BITS_RANGE = (4, 16)
SYNTHETIC_NOISES = ("white", "pink", "brown")

# Canonical application order for sampled chains: room and channel first, additive noise last.
CANONICAL_ORDER: tuple[str, ...] = (
    "reverb",
    "band_limit",
    "clip",
    "codec",
    "packet_drop",
    "mix_noise",
)

# Parameters each operator accepts, and which of them are required.
_OP_PARAMS: dict[str, tuple[set[str], set[str]]] = {
    "mix_noise": ({"snr", "noise"}, {"snr"}),
    "packet_drop": ({"n_drops", "max_len_ms"}, {"n_drops"}),
    "clip": ({"threshold"}, {"threshold"}),
    "band_limit": ({"cutoff"}, {"cutoff"}),
    "reverb": ({"rt60"}, {"rt60"}),
    "codec": ({"bits"}, {"bits"}),
}


def check_op_params(kind: str, params: dict[str, Any]) -> None:
    """Range checks for one operator; raises ValueError with a readable message."""
    allowed, required = _OP_PARAMS[kind]
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"{kind}: unknown params {sorted(unknown)}")
    missing = required - set(params)
    if missing:
        raise ValueError(f"{kind}: missing params {sorted(missing)}")

    if kind == "mix_noise":
        snr = float(params["snr"])
        if not SNR_RANGE[0] <= snr <= SNR_RANGE[1]:
            raise ValueError(f"mix_noise: snr {snr} dB outside {list(SNR_RANGE)}")
        noise = params.get("noise", "white")
        if not isinstance(noise, str) or not noise:
            raise ValueError("mix_noise: noise must be a colour name or a WAV path")
    elif kind == "packet_drop":
        if int(params["n_drops"]) < 0:
            raise ValueError("packet_drop: n_drops must be >= 0")
        max_len = float(params.get("max_len_ms", MAX_DROP_MS))
        if not 0.0 <= max_len <= MAX_DROP_MS:
            raise ValueError(f"packet_drop: max_len_ms {max_len} outside [0, {MAX_DROP_MS}]")
    elif kind == "clip":
        thr = float(params["threshold"])
        if not 0.0 < thr <= 1.0:
            raise ValueError(f"clip: threshold {thr} outside (0, 1]")
    elif kind == "band_limit":
        cutoff = float(params["cutoff"])
        if not 0.0 < cutoff < SAMPLE_RATE / 2:
            raise ValueError(f"band_limit: cutoff {cutoff} Hz outside (0, {SAMPLE_RATE // 2})")
    elif kind == "reverb":
        if float(params["rt60"]) <= 0.0:
            raise ValueError("reverb: rt60 must be > 0")
    elif kind == "codec":
        bits = int(params["bits"])
        if not CODEC_BITS_RANGE[0] <= bits <= CODEC_BITS_RANGE[1]:
            raise ValueError(f"codec: bits {bits} outside {list(CODEC_BITS_RANGE)}")


class DegradationOp(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: OpKind
    params: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_params(self) -> "DegradationOp":
        check_op_params(self.kind, self.params)
        return self


class DegradationSpec(BaseModel):
    """Ordered, seeded degradation chain. Serialised as {"ops": [{kind, params}], "seed"}."""

    model_config = ConfigDict(extra="forbid")

    ops: list[DegradationOp] = Field(default_factory=list)
    seed: int = Field(default=0, ge=0, lt=2**64)


class AppliedOp(BaseModel):
    """Realised parameters of one operator; enough to replay it without random draws."""

    model_config = ConfigDict(extra="forbid")

    kind: OpKind
    params: dict[str, Any] = Field(default_factory=dict)


class DegradationReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    steps: list[AppliedOp] = Field(default_factory=list)


class Range(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    low: float
    high: float

    @model_validator(mode="after")
    def _ordered(self) -> "Range":
        if self.low > self.high:
            raise ValueError(f"range low {self.low} > high {self.high}")
        return self


class DegradeConfig(BaseModel):
    """
    Per-utterance sampling of degradation chains.

    Probabilities are independent per operator kind; ranges are inclusive.
    """

    model_config = ConfigDict(extra="forbid")

    p_mix_noise: float = Field(default=1.0, ge=0.0, le=1.0)
    p_packet_drop: float = Field(default=0.5, ge=0.0, le=1.0)
    p_clip: float = Field(default=0.25, ge=0.0, le=1.0)
    p_band_limit: float = Field(default=0.5, ge=0.0, le=1.0)
    p_reverb: float = Field(default=0.25, ge=0.0, le=1.0)
    p_codec: float = Field(default=0.25, ge=0.0, le=1.0)

    snr_db: Range = Range(low=-15.0, high=40.0)
    snr_choices: list[float] | None = Field(
        default=None, description="if set, SNR is drawn from this set instead of snr_db"
    )
    noise_kinds: list[str] = Field(default_factory=lambda: list(SYNTHETIC_NOISES))
    n_drops: Range = Range(low=1, high=5)
    drop_max_ms: float = Field(default=MAX_DROP_MS, ge=0.0, le=MAX_DROP_MS)
    clip_threshold: Range = Range(low=0.1, high=0.9)
    cutoff_hz: Range = Range(low=1000.0, high=7000.0)
    rt60_s: Range = Range(low=0.2, high=1.0)
    codec_bits: Range = Range(low=4, high=12)

    @field_validator("snr_choices")
    @classmethod
    def _snr_choices_in_range(cls, v: list[float] | None) -> list[float] | None:
        if v is not None:
            if not v:
                raise ValueError("snr_choices must not be empty")
            for snr in v:
                if not SNR_RANGE[0] <= snr <= SNR_RANGE[1]:
                    raise ValueError(f"snr choice {snr} outside {list(SNR_RANGE)}")
        return v

    @model_validator(mode="after")
    def _check_ranges(self) -> "DegradeConfig":
        if self.snr_db.low < SNR_RANGE[0] or self.snr_db.high > SNR_RANGE[1]:
            raise ValueError(f"snr_db must lie within {list(SNR_RANGE)}")
        if self.n_drops.low < 0:
            raise ValueError("n_drops must be >= 0")
        if self.clip_threshold.low <= 0.0 or self.clip_threshold.high > 1.0:
            raise ValueError("clip_threshold must lie within (0, 1]")
        if self.cutoff_hz.low <= 0.0 or self.cutoff_hz.high >= SAMPLE_RATE / 2:
            raise ValueError("cutoff_hz must lie within (0, 8000)")
        if self.rt60_s.low <= 0.0:
            raise ValueError("rt60_s must be > 0")
        if self.codec_bits.low < CODEC_BITS_RANGE[0] or self.codec_bits.high > CODEC_BITS_RANGE[1]:
            raise ValueError(f"codec_bits must lie within {list(CODEC_BITS_RANGE)}")
        if not self.noise_kinds:
            raise ValueError("noise_kinds must not be empty")
        return self

    def probability(self, kind: str) -> float:
        return float(getattr(self, f"p_{kind}"))

    @classmethod
    def vctk_demand_snrs(cls) -> "DegradeConfig":
        """Validation-style mixtures: noise only, SNR from {2.5, 7.5, 12.5, 17.5} dB."""
        return cls(
            p_mix_noise=1.0,
            p_packet_drop=0.0,
            p_clip=0.0,
            p_band_limit=0.0,
            p_reverb=0.0,
            p_codec=0.0,
            snr_choices=[2.5, 7.5, 12.5, 17.5],
        )

    @classmethod
    def severe(cls) -> "DegradeConfig":
        """Low-SNR mixtures with packet loss, used for the ablation corpus."""
        return cls(
            p_mix_noise=1.0,
            p_packet_drop=1.0,
            p_clip=0.0,
            p_band_limit=0.0,
            p_reverb=0.0,
            p_codec=0.0,
            snr_db=Range(low=-15.0, high=0.0),
            noise_kinds=["white", "pink"],
            n_drops=Range(low=2, high=5),
        )
