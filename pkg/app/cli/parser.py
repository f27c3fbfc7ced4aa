from __future__ import annotations

import argparse
from typing import NoReturn

from app.core.errors import UsageError
from app.core.schemas.bundle import EnhanceMode

STAGES = ("gsr", "speaker", "vc")


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so dispatch() owns the exit code."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status: int = 0, message: str | None = None) -> NoReturn:
        if status:
            raise UsageError(message or f"{self.prog}: exit {status}")
        if message:
            self._print_message(message)
        raise SystemExit(0)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig JSON (unknown keys are rejected)")
    p.add_argument("--preset", choices=["desk", "full"], help="base configuration before --config")
    p.add_argument("--seed", type=int, help="global seed (overrides seeds.global_seed)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for per-file work")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> CliParser:
    parser = CliParser(prog="voice-restore", description="Two-stage speech restoration toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("toy-corpus", help="write the seeded synthetic multi-speaker corpus")
    _common(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--speakers", type=int, default=4)
    p.add_argument("--utterances", type=int, default=5, help="per speaker")
    p.add_argument("--seconds", type=float, default=1.5)
    p.add_argument("--severe", action="store_true", help="SNR in [-15, 0] dB plus packet drops")

    p = sub.add_parser("degrade", help="apply sampled (or given) degradation chains")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="single clean WAV")
    src.add_argument("--manifest", help="degrade every clean_path of a manifest")
    p.add_argument("--out", help="output WAV for --in")
    p.add_argument("--outdir", help="output directory for --manifest")
    p.add_argument("--spec", help="DegradationSpec JSON; sampled from the config when absent")

    p = sub.add_parser("fit-codebook", help="k-means content codebook over clean frames")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True, help="bundle directory to write codebook.ckpt into")
    p.add_argument("--k", type=int, help="overrides conditioning.codebook_k")

    p = sub.add_parser("train", help="train one stage into a bundle directory")
    _common(p)
    p.add_argument("--stage", required=True, choices=STAGES)
    p.add_argument("--variant", choices=["ssl", "mel"], default="ssl", help="vc front end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True, help="bundle directory (created or updated)")
    p.add_argument("--epochs", type=int, help="overrides the stage optimizer epochs")
    p.add_argument("--units", help="JSONL of {utterance_id, ids}: external units for --stage vc")
    p.add_argument("--speaker-embeddings", help="JSONL of {speaker_id, vector}: external embeddings for --stage vc")
    p.add_argument("--progress", action="store_true")

    p = sub.add_parser("enhance", help="restore speech with one system variant")
    _common(p)
    p.add_argument("--mode", required=True, choices=[m.value for m in EnhanceMode])
    p.add_argument("--bundle", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="single degraded WAV")
    src.add_argument("--manifest", help="enhance every degraded_path of a manifest")
    p.add_argument("--enroll", nargs="+", default=[], help="clean enrollment WAVs (VC modes)")
    p.add_argument("--out", help="output WAV for --in")
    p.add_argument("--outdir", help="output directory for --manifest")
    p.add_argument("--dump-mels", help="directory for per-stage mel dumps (--in only)")
    p.add_argument("--units", help="JSONL of {utterance_id, ids}: external content units (vc-ssl, gsr+vc)")
    p.add_argument("--speaker-embeddings", help="JSONL of {speaker_id, vector}: replaces enrollment")
    p.add_argument("--utterance-id", help="units key for --in (defaults to the file stem)")
    p.add_argument("--speaker-id", help="embedding key for --in")

    p = sub.add_parser("evaluate", help="score degraded/enhanced columns of a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--external", help="CSV of utterance_id, metric, value to merge")
    p.add_argument("--bundle", help="needed for the speaker_cosine metric")

    p = sub.add_parser("ablate", help="GSR / VC (Mel) / VC (SSL) / GSR+VC comparison table")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bundle", help="trained bundle; required unless --train")
    p.add_argument("--train", action="store_true", help="train every component on the manifest first")
    p.add_argument("--outdir", required=True, help="report, mel dumps and snapshot; trained bundle goes to <outdir>/bundle")

    p = sub.add_parser("model-size", help="parameter table of a bundle")
    _common(p)
    p.add_argument("--bundle", required=True)

    return parser
