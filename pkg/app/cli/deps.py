"""Shared command-line plumbing: config loading and output paths."""

import argparse
from pathlib import Path
from typing import Dict, Optional

from app.core.config import get_settings
from app.schemas.run_config import RunConfig, load_run_config

settings = get_settings()


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", help="flat key=value run configuration file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable, applied after the file)",
    )
    parser.add_argument("--out", help="output path ('-' for stdout); defaults under output_dir")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, args.set)


def output_path(config: RunConfig, args: argparse.Namespace, default_name: str) -> str:
    if getattr(args, "out", None):
        return args.out
    return str(Path(config.output_dir) / default_name)


def provenance(config: RunConfig) -> Dict[str, object]:
    """Columns appended to every CSV row."""
    return {
        "config_hash": config.config_hash(),
        "version": settings.version,
        "schema_version": settings.schema_version,
    }


PROVENANCE_COLUMNS = ["config_hash", "version", "schema_version"]


def sibling(path: str, name: str) -> Optional[str]:
    """A file next to ``path`` (None when writing to stdout)."""
    if path == "-":
        return None
    return str(Path(path).parent / name)
