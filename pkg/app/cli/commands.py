from __future__ import annotations

import argparse
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from app.core.errors import UsageError
from app.core.schemas.bundle import EnhanceMode
from app.core.schemas.config import RunConfig
from app.core.schemas.degradation import DegradationSpec, DegradeConfig
from app.ml.datasets.build_dataset import build_toy_corpus
from app.ml.datasets.manifest import load_manifest, write_manifest
from app.ml.datasets.schema import ManifestRow
from app.ml.degrade import apply_chain, sample_spec
from app.ml.features.encoders import (
    CepstralFeatureExtractor,
    fit_codebook,
    load_external_speaker_embeddings,
    load_external_units,
)
from app.ml.signal.audio import read_wav, write_wav
from app.ml.signal.mel import mel_spectrogram
from app.ml.training.train_gsr import train_gsr
from app.ml.training.train_speaker import train_speaker_encoder
from app.ml.training.train_vc import train_vc
from app.services.evaluation.export import dump_stages, merge_external_scores
from app.services.evaluation.report import MetricReport
from app.services.evaluation.runner import EvalSystem, identity_system, run_eval
from app.services.pipeline.bundle import BUNDLE_FILE, ModelBundle, load_bundle, save_bundle
from app.services.pipeline.enhance import enhance_files, enhance_with_stages

logger = logging.getLogger(__name__)

SNAPSHOT_FILE = "resolved_config.json"
ABLATION_MODES = (EnhanceMode.GSR, EnhanceMode.VC_MEL, EnhanceMode.VC_SSL, EnhanceMode.GSR_VC)


@dataclass
class RunContext:
    args: argparse.Namespace
    config: RunConfig
    seed: int

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunContext":
        config = RunConfig.load(args.config, preset=args.preset)
        seed = config.seeds.global_seed if args.seed is None else args.seed
        if seed < 0:
            raise UsageError(f"--seed must be non-negative, got {seed}")
        if args.jobs < 1:
            raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
        config = config.model_copy(update={"seeds": config.seeds.model_copy(update={"global_seed": seed})})
        return cls(args=args, config=config, seed=seed)

    def write_snapshot(self, directory: str | Path) -> Path:
        """The snapshot is itself a valid --config; with it the run replays bit-exactly."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        path = d / SNAPSHOT_FILE
        path.write_text(json.dumps(self.config.snapshot(), indent=2, sort_keys=True), encoding="utf-8")
        return path


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required here")


def _derived_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _open_bundle(directory: Path, config: RunConfig) -> ModelBundle:
    """Existing bundle in `directory` (if any) with shared settings taken from the config."""
    bundle = load_bundle(directory) if (directory / BUNDLE_FILE).exists() else ModelBundle()
    bundle.mel_config = config.mel
    bundle.vocoder = config.vocoder
    bundle.guidance = config.guidance
    bundle.schedule = config.diffusion.schedule
    bundle.handoff = config.diffusion.handoff
    return bundle


# ---- toy-corpus / degrade ----


def cmd_toy_corpus(ctx: RunContext) -> int:
    a = ctx.args
    degrade = DegradeConfig.severe() if a.severe else ctx.config.degrade
    out = Path(a.outdir)
    build_toy_corpus(
        out,
        n_speakers=a.speakers,
        utterances_per_speaker=a.utterances,
        seconds=a.seconds,
        degrade_config=degrade,
        seed=ctx.seed,
    )
    ctx.write_snapshot(out)
    return 0


def _degrade_one(clean_path: str, out_path: Path, spec: DegradationSpec) -> Path:
    degraded, report = apply_chain(read_wav(clean_path), spec)
    write_wav(degraded, out_path)
    out_path.with_suffix(".json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return out_path


def _load_spec(path: str) -> DegradationSpec:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Degradation spec not found: {p}")
    return DegradationSpec.model_validate_json(p.read_text(encoding="utf-8"))


def cmd_degrade(ctx: RunContext) -> int:
    a = ctx.args
    fixed = _load_spec(a.spec) if a.spec else None

    if a.input:
        _require(a, "out")
        spec = fixed or sample_spec(ctx.config.degrade, ctx.seed)
        out = _degrade_one(a.input, Path(a.out), spec)
        ctx.write_snapshot(out.parent)
        print(f"✅ Saved degraded audio to: {out}")
        return 0

    _require(a, "outdir")
    outdir = Path(a.outdir)
    rows = load_manifest(a.manifest)
    seeds = _derived_seeds(ctx.seed, len(rows))
    specs = [fixed or sample_spec(ctx.config.degrade, s) for s in seeds]
    paths = Parallel(n_jobs=a.jobs, prefer="threads")(
        delayed(_degrade_one)(r.clean_path, outdir / "degraded" / f"{r.utterance_id}.wav", spec)
        for r, spec in zip(rows, specs)
    )
    new_rows = [r.model_copy(update={"degraded_path": str(p.resolve())}) for r, p in zip(rows, paths)]
    manifest = write_manifest(new_rows, outdir / "manifest.jsonl")
    ctx.write_snapshot(outdir)
    print(f"✅ Degraded {len(rows)} utterances; manifest: {manifest}")
    return 0


# ---- training ----


def _codebook_from_rows(rows: list[ManifestRow], config: RunConfig, k: int, seed: int):
    cond = config.conditioning
    extractor = CepstralFeatureExtractor.for_kind(cond.feature_kind)
    features = [extractor.transform(mel_spectrogram(read_wav(r.clean_path), config.mel)) for r in rows]
    return fit_codebook(features, k, seed=seed, feature_kind=cond.feature_kind)


def cmd_fit_codebook(ctx: RunContext) -> int:
    a = ctx.args
    outdir = Path(a.outdir)
    rows = load_manifest(a.manifest)
    k = a.k or ctx.config.conditioning.codebook_k
    bundle = _open_bundle(outdir, ctx.config)
    bundle.codebook = _codebook_from_rows(rows, ctx.config, k, ctx.seed)
    save_bundle(bundle, outdir)
    ctx.write_snapshot(outdir)
    print(f"✅ Saved codebook (K={k}) to: {outdir / 'codebook.ckpt'}")
    return 0


def _with_epochs(optimizer, epochs: int | None):
    return optimizer if epochs is None else optimizer.model_copy(update={"epochs": epochs})


def train_stage(
    stage: str,
    rows: list[ManifestRow],
    bundle: ModelBundle,
    config: RunConfig,
    *,
    seed: int,
    outdir: Path,
    variant: str = "ssl",
    epochs: int | None = None,
    progress: bool = False,
    units: dict | None = None,
    speakers: dict | None = None,
) -> ModelBundle:
    """Train one stage and attach the result to `bundle`."""
    if (units or speakers) and stage != "vc":
        raise UsageError("--units and --speaker-embeddings apply to --stage vc only")
    if stage == "gsr":
        g = config.gsr
        bundle.gsr, _ = train_gsr(
            rows, g.model, g.loss, _with_epochs(g.optimizer, epochs),
            mel_config=config.mel, seed=seed, segment_frames=g.segment_frames,
            out_dir=outdir, progress=progress,
        )
    elif stage == "speaker":
        c = config.conditioning
        bundle.speaker_encoder, _ = train_speaker_encoder(
            rows, c.speaker_encoder, _with_epochs(c.speaker_optimizer, epochs),
            mel_config=config.mel, seed=seed, segment_frames=c.segment_frames,
            out_dir=outdir, progress=progress,
        )
    elif stage == "vc":
        if bundle.codebook is None or (bundle.speaker_encoder is None and speakers is None):
            raise UsageError("train --stage vc needs a codebook and a speaker encoder in the bundle directory")
        d = config.diffusion
        front, net, _ = train_vc(
            rows, bundle.codebook, bundle.speaker_encoder,
            config.conditioning.content_encoder, d.score_net,
            _with_epochs(d.optimizer, epochs), d.loss,
            guidance=config.guidance, schedule_cfg=d.schedule, mel_config=config.mel,
            variant=variant, seed=seed, segment_frames=d.segment_frames,
            out_dir=outdir, progress=progress, units=units, speakers=speakers,
        )
        if variant == "ssl":
            bundle.content_encoder, bundle.score_net = front, net
        else:
            bundle.mel_projection, bundle.mel_score_net = front, net
    else:
        raise UsageError(f"unknown stage {stage!r}")
    return bundle


def cmd_train(ctx: RunContext) -> int:
    a = ctx.args
    outdir = Path(a.outdir)
    rows = load_manifest(a.manifest)
    bundle = _open_bundle(outdir, ctx.config)
    train_stage(
        a.stage, rows, bundle, ctx.config,
        seed=ctx.seed, outdir=outdir, variant=a.variant, epochs=a.epochs, progress=a.progress,
        units=load_external_units(a.units) if a.units else None,
        speakers=load_external_speaker_embeddings(a.speaker_embeddings) if a.speaker_embeddings else None,
    )
    save_bundle(bundle, outdir)
    ctx.write_snapshot(outdir)
    label = f"{a.stage}-{a.variant}" if a.stage == "vc" else a.stage
    print(f"✅ Trained {label}; bundle: {outdir}")
    return 0


def train_full_bundle(rows: list[ManifestRow], config: RunConfig, outdir: Path, *, seed: int) -> ModelBundle:
    """Codebook, speaker encoder, GSR and both VC variants, in dependency order."""
    bundle = _open_bundle(outdir, config)
    stage_seeds = _derived_seeds(seed, 5)
    bundle.codebook = _codebook_from_rows(rows, config, config.conditioning.codebook_k, stage_seeds[0])
    for stage, variant, s in (
        ("speaker", "ssl", stage_seeds[1]),
        ("gsr", "ssl", stage_seeds[2]),
        ("vc", "ssl", stage_seeds[3]),
        ("vc", "mel", stage_seeds[4]),
    ):
        train_stage(stage, rows, bundle, config, seed=s, outdir=outdir, variant=variant)
    save_bundle(bundle, outdir)
    return bundle


# ---- enhance / evaluate / ablate ----


def _bundle_for_run(ctx: RunContext, path: str) -> ModelBundle:
    """
    Load a bundle for inference. An explicit --config overrides the bundle's
    guidance, vocoder and handoff; the noise schedule always stays the one the
    bundle was trained with. The settings in effect are written back into
    `ctx.config` so the snapshot records what actually ran.
    """
    bundle = load_bundle(path)
    if ctx.args.config:
        bundle.guidance = ctx.config.guidance
        bundle.vocoder = ctx.config.vocoder
        bundle.handoff = ctx.config.diffusion.handoff
    diffusion = ctx.config.diffusion.model_copy(update={"handoff": bundle.handoff, "schedule": bundle.schedule})
    ctx.config = ctx.config.model_copy(
        update={"guidance": bundle.guidance, "vocoder": bundle.vocoder, "diffusion": diffusion}
    )
    return bundle


def _pick(mapping: dict | None, key: str | None, what: str):
    if mapping is None:
        return None
    if key is None or key not in mapping:
        raise UsageError(f"no {what} for {key!r}")
    return mapping[key]


def cmd_enhance(ctx: RunContext) -> int:
    a = ctx.args
    mode = EnhanceMode(a.mode)
    bundle = _bundle_for_run(ctx, a.bundle)
    units = load_external_units(a.units) if a.units else None
    speakers = load_external_speaker_embeddings(a.speaker_embeddings) if a.speaker_embeddings else None

    if a.input:
        _require(a, "out")
        if speakers is not None:
            _require(a, "speaker_id")
        enrollment = [] if speakers is not None else [read_wav(p) for p in a.enroll]
        result = enhance_with_stages(
            read_wav(a.input), mode, bundle, enrollment, seed=ctx.seed,
            units=_pick(units, a.utterance_id or Path(a.input).stem, "external units"),
            speaker=_pick(speakers, a.speaker_id, "speaker embedding"),
        )
        out = write_wav(result.audio, a.out)
        if a.dump_mels:
            dump_stages(result.stages, a.dump_mels)
        ctx.write_snapshot(out.parent)
        print(f"✅ Saved {mode.label} output to: {out}")
        return 0

    _require(a, "outdir")
    outdir = Path(a.outdir)
    rows = load_manifest(a.manifest)
    jobs_spec = []
    for r in rows:
        source = r.degraded_path or r.clean_path
        enroll = list(a.enroll) or r.enrollment_paths
        jobs_spec.append((source, enroll, str(outdir / "enhanced" / f"{r.utterance_id}.wav")))
    paths = enhance_files(
        jobs_spec, mode, bundle, seed=ctx.seed, jobs=a.jobs,
        units=[_pick(units, r.utterance_id, "external units") for r in rows] if units else None,
        speakers=[_pick(speakers, r.speaker_id, "speaker embedding") for r in rows] if speakers else None,
    )
    new_rows = [r.model_copy(update={"enhanced_path": str(Path(p).resolve())}) for r, p in zip(rows, paths)]
    manifest = write_manifest(new_rows, outdir / "manifest.jsonl")
    ctx.write_snapshot(outdir)
    print(f"✅ Enhanced {len(rows)} utterances with {mode.label}; manifest: {manifest}")
    return 0


def _finish_report(report: MetricReport, csv_path: Path) -> int:
    report.write_csv(csv_path)
    print(report.render_table())
    print(f"✅ Saved report to: {csv_path}")
    if report.skipped:
        for s in report.skipped:
            print(f"skipped {s['system']}/{s['utterance_id']}: {s['error']}")
        return 2
    return 0


def cmd_evaluate(ctx: RunContext) -> int:
    a = ctx.args
    rows = load_manifest(a.manifest)
    metrics = list(ctx.config.eval.metrics)
    encoder = load_bundle(a.bundle).speaker_encoder if a.bundle else None
    if encoder is None and "speaker_cosine" in metrics:
        logger.warning("no speaker encoder (--bundle); dropping speaker_cosine")
        metrics = [m for m in metrics if m != "speaker_cosine"]

    report = MetricReport()
    for name, field_name in (("degraded", "degraded_path"), ("enhanced", "enhanced_path")):
        subset = [r for r in rows if getattr(r, field_name)]
        if subset:
            report = report.merged(
                run_eval(
                    subset, [identity_system(name, field_name)], metrics,
                    speaker_encoder=encoder, mel_config=ctx.config.mel, jobs=a.jobs,
                )
            )
    external = a.external or ctx.config.eval.external_scores
    if external:
        report = merge_external_scores(report, external)

    out = Path(a.out)
    ctx.write_snapshot(out.parent)
    return _finish_report(report, out)


def _mode_system(mode: EnhanceMode, bundle: ModelBundle, seed: int) -> EvalSystem:
    def run(audio, enrollment):
        return enhance_with_stages(audio, mode, bundle, enrollment, seed=seed)

    return EvalSystem(mode.label, run)


def cmd_ablate(ctx: RunContext) -> int:
    a = ctx.args
    if not a.train and not a.bundle:
        raise UsageError("ablate needs --bundle or --train")
    outdir = Path(a.outdir)
    if a.bundle and outdir.resolve() == Path(a.bundle).resolve():
        raise UsageError("ablate --outdir must differ from the --bundle directory")
    rows = load_manifest(a.manifest)
    if a.train:
        bundle = train_full_bundle(rows, ctx.config, outdir / "bundle", seed=ctx.seed)
    else:
        bundle = _bundle_for_run(ctx, a.bundle)

    metrics = list(ctx.config.eval.metrics)
    encoder = bundle.speaker_encoder if "speaker_cosine" in metrics else None
    systems = [_mode_system(m, bundle, ctx.seed) for m in ABLATION_MODES]
    report = run_eval(
        rows, systems, metrics,
        speaker_encoder=encoder, mel_config=ctx.config.mel, jobs=a.jobs,
        dump_dir=outdir / "mels" if ctx.config.eval.dump_mels else None,
    )
    ctx.write_snapshot(outdir)
    return _finish_report(report, outdir / "ablation.csv")


def cmd_model_size(ctx: RunContext) -> int:
    table = load_bundle(ctx.args.bundle).parameter_report()
    print(table.to_string(index=False))
    return 0


COMMANDS: dict[str, Callable[[RunContext], int]] = {
    "toy-corpus": cmd_toy_corpus,
    "degrade": cmd_degrade,
    "fit-codebook": cmd_fit_codebook,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "model-size": cmd_model_size,
}
