"""lyapunov: CSV sweep of finite-k Lyapunov estimates over energy."""

import argparse

from app.cli.deps import PROVENANCE_COLUMNS, add_common_arguments, output_path, provenance
from app.schemas.run_config import RunConfig
from app.services.lyapunov_service import HEADER, LyapunovService
from app.utils.io import write_csv


def register(subparsers) -> None:
    parser = subparsers.add_parser("lyapunov", help="Lyapunov exponent sweep over an energy window")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> int:
    rows = LyapunovService(config).sweep()
    extra = provenance(config)
    write_csv(
        output_path(config, args, "lyapunov.csv"),
        ({**row.model_dump(), **extra} for row in rows),
        HEADER + PROVENANCE_COLUMNS,
    )
    return 0
