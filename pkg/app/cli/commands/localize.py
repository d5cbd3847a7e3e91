"""localize: eigenfunction dumps, decay fits and decay certificates."""

import argparse

from app.cli.deps import PROVENANCE_COLUMNS, add_common_arguments, output_path, provenance, sibling
from app.schemas.run_config import RunConfig
from app.services.localization_service import LocalizationService
from app.utils.io import write_csv, write_json

EIGENFUNCTION_COLUMNS = ["site", "amplitude_sign", "amplitude_log"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("localize", help="localization pipeline on a truncation")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> int:
    service = LocalizationService(config)
    report = service.run()
    path = output_path(config, args, "localize_report.json")
    write_json(path, report)

    extra = provenance(config)
    for index, phi in service.eigenfunctions:
        target = sibling(path, f"eigenfunction_{index}.csv")
        if target is None:
            break
        write_csv(target, ({**row, **extra} for row in phi.rows()), EIGENFUNCTION_COLUMNS + PROVENANCE_COLUMNS)
    return 0
