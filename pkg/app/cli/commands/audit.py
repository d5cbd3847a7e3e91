"""audit: JSON-lines audit stream plus a per-lemma summary CSV."""

import argparse
from collections import OrderedDict
from typing import Dict, Optional

from app.cli.deps import PROVENANCE_COLUMNS, add_common_arguments, output_path, provenance, sibling
from app.core.logging import get_logger
from app.schemas.run_config import RunConfig
from app.services.audit_service import AUDITS, AuditService
from app.utils.io import JsonLinesWriter, write_csv

logger = get_logger(__name__)

SUMMARY_COLUMNS = [
    "lemma",
    "records",
    "passed",
    "failed",
    "undecided",
    "errors",
    "discarded",
    "discard_rate",
    "holds_from_n",
]


def holds_from(scale_ok: Dict[int, bool]) -> Optional[int]:
    """Least audited n from which every larger audited scale has no failures."""
    first = None
    for n in sorted(scale_ok, reverse=True):
        if not scale_ok[n]:
            break
        first = n
    return first


def register(subparsers) -> None:
    parser = subparsers.add_parser("audit", help="run one finite-scale audit")
    parser.add_argument("which", choices=sorted(AUDITS), help="audit name")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def _new_row(lemma: str) -> dict:
    return {"lemma": lemma, "records": 0, "passed": 0, "failed": 0, "undecided": 0, "errors": 0}


def run(args: argparse.Namespace, config: RunConfig) -> int:
    service = AuditService(config)
    path = output_path(config, args, f"audit_{args.which}.jsonl")
    summary: "OrderedDict[str, dict]" = OrderedDict()
    scales: Dict[str, Dict[int, bool]] = {}
    with JsonLinesWriter(path) as writer:
        for record in service.run(args.which):
            writer.write(record)
            row = summary.setdefault(record.lemma, _new_row(record.lemma))
            row["records"] += 1
            if record.error is not None:
                row["errors"] += 1
            elif record.passed is None:
                row["undecided"] += 1
            elif record.passed:
                row["passed"] += 1
            else:
                row["failed"] += 1
            n = record.params.get("n")
            if n is not None:
                ok = record.error is None and record.passed is not False
                per_lemma = scales.setdefault(record.lemma, {})
                per_lemma[n] = per_lemma.get(n, True) and ok

    for lemma in service.discarded:
        summary.setdefault(lemma, _new_row(lemma))
    for row in summary.values():
        discarded = service.discarded[row["lemma"]]
        sampled = row["records"] + discarded
        row["discarded"] = discarded
        row["discard_rate"] = round(discarded / sampled, 6) if sampled else 0.0
        if discarded:
            logger.warning(f"{row['lemma']}: {discarded}/{sampled} flagged samples discarded")
        row["holds_from_n"] = holds_from(scales.get(row["lemma"], {}))
        if row["failed"]:
            logger.warning(f"{row['lemma']}: {row['failed']}/{row['records']} records fail")
    target = sibling(path, f"audit_{args.which}_summary.csv")
    if target is not None:
        extra = provenance(config)
        write_csv(target, ({**row, **extra} for row in summary.values()), SUMMARY_COLUMNS + PROVENANCE_COLUMNS)
    return 0
