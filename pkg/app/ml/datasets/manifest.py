from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, TypeVar

import soundfile as sf
from pydantic import BaseModel, ValidationError

from app.core.errors import EmptyManifest, UnsupportedAudioFormat
from app.core.schemas.audio import SAMPLE_RATE
from app.ml.datasets.schema import ManifestRow

logger = logging.getLogger(__name__)

RowT = TypeVar("RowT", bound=BaseModel)

_PATH_FIELDS = ("clean_path", "degraded_path", "enhanced_path")


def read_jsonl(path: str | Path, model: type[RowT]) -> list[RowT]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"JSONL file not found: {p}")
    rows: list[RowT] = []
    with p.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(model.model_validate(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as e:
                raise ValueError(f"{p}:{lineno}: invalid {model.__name__} row ({e})") from e
    return rows


def write_jsonl(rows: Iterable[BaseModel], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(row.model_dump_json(exclude_none=True) + "\n")
    return p


def _resolve(base: Path, value: str) -> str:
    q = Path(value)
    return str(q if q.is_absolute() else (base / q))


def _check_wav(path: str) -> None:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"manifest references a missing file: {p}")
    info = sf.info(str(p))
    if info.format != "WAV" or info.channels != 1 or info.samplerate != SAMPLE_RATE:
        raise UnsupportedAudioFormat(
            f"{p}: expected mono {SAMPLE_RATE} Hz WAV, got {info.format} "
            f"{info.channels}ch {info.samplerate} Hz"
        )


def load_manifest(path: str | Path, *, check_files: bool = True) -> list[ManifestRow]:
    """Read, resolve relative paths and validate a manifest. Empty manifests are an error."""
    p = Path(path)
    rows = read_jsonl(p, ManifestRow)
    if not rows:
        raise EmptyManifest(f"manifest has no rows: {p}")

    seen: set[str] = set()
    resolved: list[ManifestRow] = []
    for row in rows:
        if row.utterance_id in seen:
            raise ValueError(f"{p}: duplicate utterance_id {row.utterance_id!r}")
        seen.add(row.utterance_id)

        update: dict[str, object] = {
            f: _resolve(p.parent, getattr(row, f)) for f in _PATH_FIELDS if getattr(row, f)
        }
        update["enrollment_paths"] = [_resolve(p.parent, e) for e in row.enrollment_paths]
        row = row.model_copy(update=update)

        if check_files:
            for f in _PATH_FIELDS:
                value = getattr(row, f)
                # enhanced outputs may not exist yet when the manifest is an enhancement plan
                if value and (f != "enhanced_path" or Path(value).exists()):
                    _check_wav(value)
            for e in row.enrollment_paths:
                _check_wav(e)
        resolved.append(row)

    logger.info("loaded manifest %s (%d rows)", p, len(resolved))
    return resolved


def write_manifest(rows: Iterable[ManifestRow], path: str | Path) -> Path:
    return write_jsonl(rows, path)
