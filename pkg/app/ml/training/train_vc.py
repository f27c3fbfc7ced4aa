from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Sequence, TypeVar

import numpy as np
import pandas as pd
import torch
from torch import nn
from tqdm import tqdm

from app.core.errors import EmptyManifest, MissingComponent, ShapeMismatch, UnitOutOfRange
from app.core.schemas.audio import MelConfig
from app.core.schemas.diffusion import GuidanceConfig, LossConfig, ScheduleConfig
from app.core.schemas.models import ContentEncoderConfig, ProjectionConfig, ScoreNetConfig
from app.core.schemas.training import OptimizerConfig
from app.ml.datasets.schema import ManifestRow
from app.ml.diffusion.losses import score_loss, total_loss
from app.ml.diffusion.schedule import DiffusionSchedule
from app.ml.features.encoders import Codebook, ContentUnits, extract_units
from app.ml.models.content_encoder import ContentEncoder, enc_loss
from app.ml.models.projection import MelProjection
from app.ml.models.score_net import ScoreNetwork
from app.ml.models.speaker_encoder import SpeakerEmbedding, SpeakerEncoder, speaker_embed
from app.ml.nn.checkpoint import save_checkpoint
from app.ml.nn.training import OptimizerState, train_step
from app.ml.signal.audio import read_wav
from app.ml.signal.mel import mel_spectrogram
from app.ml.training.data import crop_start, epoch_batches, fit_frames

logger = logging.getLogger(__name__)

VC_LOG_COLUMNS = ["epoch", "l_d", "l_enc", "l_total", "lr"]

Variant = Literal["ssl", "mel"]
T = TypeVar("T")


@dataclass(frozen=True)
class VcExample:
    mel: np.ndarray
    units: np.ndarray
    speaker: np.ndarray


class VcModel(nn.Module):
    """Coarse-spectrogram front end (content encoder or mel projection) + score network."""

    def __init__(self, front: ContentEncoder | MelProjection, score_net: ScoreNetwork) -> None:
        super().__init__()
        self.front = front
        self.score_net = score_net

    def coarse(self, units: torch.Tensor, mel: torch.Tensor) -> torch.Tensor:
        if isinstance(self.front, ContentEncoder):
            return self.front(units)
        return self.front(mel)


def prepare_vc_examples(
    rows: Sequence[ManifestRow],
    codebook: Codebook,
    speaker_encoder: SpeakerEncoder | None,
    mel_config: MelConfig,
    *,
    units: Mapping[str, ContentUnits] | None = None,
    speakers: Mapping[str, SpeakerEmbedding] | None = None,
) -> list[VcExample]:
    """
    Clean mel, units and speaker vector per row. `units` (by utterance_id) and
    `speakers` (by speaker_id) replace the codebook units and the per-clip
    speaker encoder output.
    """
    if not rows:
        raise EmptyManifest("VC training manifest is empty")
    examples = []
    for row in rows:
        clip = read_wav(row.clean_path)
        mel = mel_spectrogram(clip, mel_config).values
        if units is not None:
            ids = _lookup(units, row.utterance_id, "units").ids
            if ids.size != mel.shape[0]:
                raise ShapeMismatch(f"{row.utterance_id}: {ids.size} units for {mel.shape[0]} mel frames")
            if ids.size and ids.max() >= codebook.k:
                raise UnitOutOfRange(f"{row.utterance_id}: unit {ids.max()} outside [0, {codebook.k})")
        else:
            ids = extract_units(clip, codebook, mel_config=mel_config).ids
        if speakers is not None:
            spk = _lookup(speakers, row.speaker_id, "speaker embedding")
        elif speaker_encoder is not None:
            spk = speaker_embed([clip], speaker_encoder, mel_config)
        else:
            raise MissingComponent("VC training needs a speaker encoder or external speaker embeddings")
        examples.append(VcExample(mel=mel, units=ids, speaker=spk.vector.astype(np.float32)))
    return examples


def _lookup(table: Mapping[str, T], key: str, what: str) -> T:
    if key not in table:
        raise MissingComponent(f"no external {what} for {key!r}")
    return table[key]


def train_vc(
    rows: Sequence[ManifestRow],
    codebook: Codebook,
    speaker_encoder: SpeakerEncoder | None,
    encoder_cfg: ContentEncoderConfig | None = None,
    net_cfg: ScoreNetConfig | None = None,
    optimizer_cfg: OptimizerConfig | None = None,
    loss_cfg: LossConfig | None = None,
    *,
    guidance: GuidanceConfig | None = None,
    schedule_cfg: ScheduleConfig | None = None,
    mel_config: MelConfig | None = None,
    variant: Variant = "ssl",
    seed: int = 0,
    segment_frames: int = 64,
    out_dir: str | Path | None = None,
    progress: bool = False,
    examples: list[VcExample] | None = None,
    units: Mapping[str, ContentUnits] | None = None,
    speakers: Mapping[str, SpeakerEmbedding] | None = None,
) -> tuple[ContentEncoder | MelProjection, ScoreNetwork, pd.DataFrame]:
    """
    Joint training of the coarse-spectrogram front end and the score network on
    L_total = L_d + alpha * L_enc. `variant="mel"` trains the linear mel
    projection instead of the unit content encoder. `units` and `speakers`
    swap in externally computed conditioning (see prepare_vc_examples).
    """
    mel_config = mel_config or MelConfig()
    optimizer_cfg = optimizer_cfg or OptimizerConfig.vc_defaults()
    loss_cfg = loss_cfg or LossConfig()
    guidance = guidance or GuidanceConfig()
    schedule = DiffusionSchedule.from_config(schedule_cfg)
    net_cfg = net_cfg or ScoreNetConfig()

    if examples is None:
        examples = prepare_vc_examples(rows, codebook, speaker_encoder, mel_config, units=units, speakers=speakers)
    if not examples:
        raise EmptyManifest("no VC training examples")
    if examples[0].speaker.size != net_cfg.speaker_dim:
        raise ShapeMismatch(
            f"speaker vectors have {examples[0].speaker.size} dims, score network expects {net_cfg.speaker_dim}"
        )

    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    if variant == "ssl":
        encoder_cfg = (encoder_cfg or ContentEncoderConfig()).model_copy(update={"n_units": codebook.k})
        front: ContentEncoder | MelProjection = ContentEncoder(encoder_cfg)
    else:
        front = MelProjection(ProjectionConfig(n_mels=mel_config.n_mels))
    score_net = ScoreNetwork(net_cfg)
    model = VcModel(front, score_net)
    state = OptimizerState.create(model.parameters(), optimizer_cfg)

    def make_batch(idx: list[int]):
        mels, units = [], []
        for i in idx:
            ex = examples[i]
            start = crop_start(ex.mel.shape[0], segment_frames, gen)
            mels.append(fit_frames(ex.mel, start, segment_frames))
            units.append(fit_frames(ex.units, start, segment_frames))
        spk = np.stack([examples[i].speaker for i in idx])
        return (
            torch.from_numpy(np.stack(mels)),
            torch.from_numpy(np.stack(units)),
            torch.from_numpy(spk),
        )

    log_rows = []
    for epoch in tqdm(range(optimizer_cfg.epochs), desc=f"vc-{variant}", disable=not progress):
        lr = state.lr
        sums = {"l_d": 0.0, "l_enc": 0.0, "l_total": 0.0}
        n_batches = 0
        for idx in epoch_batches(len(examples), optimizer_cfg.batch_size, gen):
            batch = make_batch(idx)
            parts: dict[str, float] = {}

            def loss_fn(m: VcModel, b):
                m0, units, spk = b
                m_hat = m.coarse(units, m0)
                l_enc = enc_loss(m0, m_hat)
                l_d = score_loss(
                    m.score_net, m0, m_hat, spk, gen,
                    schedule=schedule, p_drop=guidance.train_dropout,
                )
                total = total_loss(l_d, l_enc, loss_cfg)
                parts.update(l_d=float(l_d), l_enc=float(l_enc), l_total=float(total))
                return total

            train_step(model, batch, loss_fn, state)
            for key in sums:
                sums[key] += parts[key]
            n_batches += 1
        state.end_epoch()
        log_rows.append({"epoch": epoch, **{k: v / n_batches for k, v in sums.items()}, "lr": lr})
        logger.debug("vc epoch %d: %s", epoch, log_rows[-1])

    front.eval()
    score_net.eval()
    log = pd.DataFrame(log_rows, columns=VC_LOG_COLUMNS)
    if out_dir is not None:
        out = Path(out_dir)
        front_name = "content_encoder" if variant == "ssl" else "mel_projection"
        net_name = "score_net" if variant == "ssl" else "mel_score_net"
        save_checkpoint(front, out / f"{front_name}.ckpt", extra={"seed": seed})
        save_checkpoint(score_net, out / f"{net_name}.ckpt", extra={"seed": seed})
        log.to_csv(out / f"vc_{variant}_train_log.csv", index=False)
    logger.info(
        "vc-%s training done: L_total %.4f -> %.4f", variant, log_rows[0]["l_total"], log_rows[-1]["l_total"]
    )
    return front, score_net, log
