"""Command-line entry point: ``python -m app.main <command> [options]``."""

import argparse
import sys
from typing import List, Optional

from app.cli.commands import audit, cf, localize, lyapunov, spectrum
from app.cli.deps import config_from_args
from app.core.config import get_settings
from app.core.errors import LabError
from app.core.logging import get_logger, setup_logging

logger = get_logger(__name__)
settings = get_settings()

COMMANDS = (cf, lyapunov, localize, audit, spectrum)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Numerical experiments on the almost Mathieu operator at completely resonant phases",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.version}")
    parser.add_argument("--log-level", default=None, help="override AMO_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Exit codes: 0 success, 1 computation failure, 2 config error, 3 precision exhaustion."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = config_from_args(args)
        logger.info(f"{args.command}: config {config.config_hash()[:12]}")
        return args.handler(args, config)
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
