"""spectrum: union of truncation spectra over a phase grid."""

import argparse

from app.cli.deps import add_common_arguments, output_path
from app.schemas.run_config import RunConfig
from app.services.spectrum_service import SpectrumService
from app.utils.io import write_json


def register(subparsers) -> None:
    parser = subparsers.add_parser("spectrum", help="sampled spectrum as a sorted JSON array")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> int:
    write_json(output_path(config, args, "spectrum.json"), SpectrumService(config).report())
    return 0
