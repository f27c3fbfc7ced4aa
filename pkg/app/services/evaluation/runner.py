from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import pandas as pd
from joblib import Parallel, delayed

from app.core.schemas.audio import MelConfig
from app.ml.datasets.schema import ManifestRow
from app.ml.models.speaker_encoder import SpeakerEncoder
from app.ml.signal.audio import AudioClip, read_wav
from app.services.evaluation import metrics as M
from app.services.evaluation.export import dump_stages
from app.services.evaluation.report import REPORT_COLUMNS, MetricReport
from app.services.pipeline.enhance import EnhanceResult

logger = logging.getLogger(__name__)

SystemFn = Callable[[AudioClip, list[AudioClip]], Union[AudioClip, EnhanceResult]]


@dataclass(frozen=True)
class EvalSystem:
    """A named system: fn(input clip, enrollment clips) -> output. Input comes from `input_field`."""

    name: str
    fn: SystemFn
    input_field: str = "degraded_path"


def identity_system(name: str, input_field: str = "degraded_path") -> EvalSystem:
    return EvalSystem(name, lambda audio, _enrollment: audio, input_field)


@dataclass
class _RowOutcome:
    system: str
    utterance_id: str
    records: list[tuple[str, float]]
    error: str | None = None


def _as_system(s: EvalSystem | tuple[str, SystemFn]) -> EvalSystem:
    if isinstance(s, EvalSystem):
        return s
    name, fn = s
    return EvalSystem(name, fn)


def _score(
    metric: str,
    clean: AudioClip,
    out: AudioClip,
    enrollment: list[AudioClip],
    speaker_encoder: SpeakerEncoder | None,
    mel_config: MelConfig,
) -> float:
    if metric == "lsd":
        return M.lsd(clean, out, mel_config)
    if metric == "si_sdr":
        return M.si_sdr(clean, out.fit_length(len(clean)))
    if metric == "mel_l1":
        return M.mel_l1(clean, out, mel_config)
    if metric == "speaker_cosine":
        assert speaker_encoder is not None
        return M.speaker_cosine(out, enrollment or [clean], speaker_encoder, mel_config)
    raise ValueError(f"unknown metric {metric!r}")


def _evaluate_row(
    system: EvalSystem,
    row: ManifestRow,
    metrics: Sequence[str],
    speaker_encoder: SpeakerEncoder | None,
    mel_config: MelConfig,
    dump_dir: Path | None,
) -> _RowOutcome:
    try:
        source = getattr(row, system.input_field)
        if not source:
            raise ValueError(f"row has no {system.input_field}")
        clean = read_wav(row.clean_path)
        enrollment = [read_wav(p) for p in row.enrollment_paths]
        result = system.fn(read_wav(source), enrollment)

        out = result.audio if isinstance(result, EnhanceResult) else result
        if dump_dir is not None and isinstance(result, EnhanceResult):
            dump_stages(result.stages, dump_dir / system.name / row.utterance_id)

        records = [
            (m, _score(m, clean, out, enrollment, speaker_encoder, mel_config)) for m in metrics
        ]
        return _RowOutcome(system.name, row.utterance_id, records)
    except Exception as e:  # noqa: BLE001  collected into report.skipped
        logger.warning("%s/%s skipped: %s", system.name, row.utterance_id, e)
        return _RowOutcome(system.name, row.utterance_id, [], f"{type(e).__name__}: {e}")


def run_eval(
    rows: Sequence[ManifestRow],
    systems: Sequence[EvalSystem | tuple[str, SystemFn]],
    metrics: Sequence[str] = ("lsd",),
    *,
    speaker_encoder: SpeakerEncoder | None = None,
    mel_config: MelConfig | None = None,
    jobs: int = 1,
    dump_dir: str | Path | None = None,
) -> MetricReport:
    """
    Score every system on every manifest row.

    Rows that fail are logged and listed in `report.skipped`; the rest of the run continues.
    Outcomes are assembled in (system, row) order whatever the job count.
    """
    unknown = [m for m in metrics if m not in M.METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown}; choose from {list(M.METRICS)}")
    if "speaker_cosine" in metrics and speaker_encoder is None:
        raise ValueError("metric speaker_cosine needs a speaker encoder")

    mel_config = mel_config or MelConfig()
    resolved = [_as_system(s) for s in systems]
    dumps = Path(dump_dir) if dump_dir is not None else None

    outcomes: list[_RowOutcome] = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_evaluate_row)(s, row, metrics, speaker_encoder, mel_config, dumps)
        for s in resolved
        for row in rows
    )

    records: list[tuple[str, str, str, float]] = []
    skipped: list[dict[str, str]] = []
    for o in outcomes:
        if o.error is not None:
            skipped.append({"system": o.system, "utterance_id": o.utterance_id, "error": o.error})
            continue
        records.extend((o.system, o.utterance_id, m, v) for m, v in o.records)

    report = MetricReport(rows=pd.DataFrame(records, columns=REPORT_COLUMNS), skipped=skipped)
    report.verify()
    logger.info(
        "evaluated %d systems x %d rows (%d skipped)", len(resolved), len(rows), len(skipped)
    )
    return report
