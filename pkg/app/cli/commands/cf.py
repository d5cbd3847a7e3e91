"""cf: convergents, β estimate and Diophantine audit per scale."""

import argparse

from app.cli.deps import add_common_arguments, output_path
from app.schemas.run_config import RunConfig
from app.services.frequency_service import FrequencyService
from app.utils.io import write_json


def register(subparsers) -> None:
    parser = subparsers.add_parser("cf", help="continued-fraction report for the configured frequency")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> int:
    report = FrequencyService(config).report()
    write_json(output_path(config, args, "cf_report.json"), report)
    return 0
