from __future__ import annotations

import logging
import sys
from typing import Sequence

from pydantic import ValidationError

from app.cli.commands import COMMANDS, RunContext
from app.cli.parser import build_parser
from app.core.errors import ConfigError, UsageError, VoiceRestoreError
from app.core.logging import configure_logging

logger = logging.getLogger("app.main")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse, validate the configuration, run one subcommand; map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
        configure_logging(args.verbose)
        ctx = RunContext.from_args(args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ValueError, FileNotFoundError) as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    logger.info("running %s (seed %d)", args.command, ctx.seed)
    try:
        return COMMANDS[args.command](ctx)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (VoiceRestoreError, OSError, ValueError, RuntimeError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(dispatch())
