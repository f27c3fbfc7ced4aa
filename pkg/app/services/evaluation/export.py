from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from app.core.schemas.audio import MelConfig
from app.ml.nn.checkpoint import read_container, write_container
from app.ml.signal.mel import MelSpectrogram
from app.services.evaluation.report import MetricReport

logger = logging.getLogger(__name__)

MEL_DUMP_KIND = "mel_dump"
EXTERNAL_COLUMNS = ["utterance_id", "metric", "value"]


def mel_to_image(mel: MelSpectrogram) -> Image.Image:
    """8-bit grey map, low frequencies at the bottom, floor mapped to black."""
    lo = float(mel.config.log_min)
    v = mel.values.astype(np.float64)
    hi = max(float(v.max()), lo + 1e-6)
    scaled = np.round(255.0 * (v - lo) / (hi - lo))
    grey = np.clip(scaled, 0, 255).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(np.flipud(grey.T)))


def write_pgm(mel: MelSpectrogram, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    mel_to_image(mel).save(p, format="PPM")
    return p


def dump_stages(stages: dict[str, MelSpectrogram], out_dir: str | Path) -> list[Path]:
    """Write `<stage>.pgm` and `<stage>.mel` (raw float32 container) per stage."""
    out = Path(out_dir)
    written: list[Path] = []
    for name, mel in stages.items():
        written.append(write_pgm(mel, out / f"{name}.pgm"))
        written.append(
            write_container(
                out / f"{name}.mel",
                {"mel": mel.values},
                kind=MEL_DUMP_KIND,
                config={"stage": name, "mel": mel.config.model_dump()},
            )
        )
    logger.debug("dumped %d stages to %s", len(stages), out)
    return written


def read_mel_dump(path: str | Path) -> MelSpectrogram:
    header, tensors = read_container(path, expected_kind=MEL_DUMP_KIND)
    return MelSpectrogram(tensors["mel"], MelConfig(**header["config"]["mel"]))


def merge_external_scores(report: MetricReport, csv_path: str | Path, system: str = "external") -> MetricReport:
    """
    Merge per-utterance scores produced elsewhere (e.g. a MOS predictor run)
    from a CSV with columns utterance_id, metric, value.
    """
    p = Path(csv_path)
    if not p.exists():
        raise FileNotFoundError(f"External score file not found: {p}")
    df = pd.read_csv(p, dtype={"utterance_id": str, "metric": str})
    missing = [c for c in EXTERNAL_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{p}: missing columns {missing}; expected {EXTERNAL_COLUMNS}")
    if "system" not in df.columns:
        df["system"] = system
    df = df[df["utterance_id"] != "__mean__"]
    logger.info("merged %d external scores from %s", len(df), p)
    return report.merged(MetricReport(rows=df))
