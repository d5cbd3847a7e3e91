"""Output writers for reports, audit streams and tables."""

import csv
import json
import math
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, TextIO, Union

import numpy as np
from pydantic import BaseModel

from app.core.logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def to_plain(value: Any) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as None, fractions as strings."""
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump(by_alias=True))
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(data: Any, indent: Optional[int] = None) -> str:
    """Canonical JSON text (sorted keys, no NaN)."""
    return json.dumps(to_plain(data), sort_keys=True, indent=indent, allow_nan=False)


@contextmanager
def _open(path: PathLike) -> Iterator[TextIO]:
    if str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as handle:
        yield handle


def write_json(path: PathLike, data: Any) -> None:
    with _open(path) as handle:
        handle.write(dumps(data, indent=2))
        handle.write("\n")
    logger.info(f"Wrote report to {path}")


class JsonLinesWriter:
    """Single-threaded JSON-lines sink; records are written in the order given."""

    def __init__(self, path: PathLike):
        self.path = path
        self.count = 0
        self._ctx = None
        self._handle: Optional[TextIO] = None

    def __enter__(self) -> "JsonLinesWriter":
        self._ctx = _open(self.path)
        self._handle = self._ctx.__enter__()
        return self

    def write(self, record: Any) -> None:
        self._handle.write(dumps(record))
        self._handle.write("\n")
        self._handle.flush()
        self.count += 1

    def __exit__(self, *exc: Any) -> None:
        self._ctx.__exit__(*exc)
        logger.info(f"Wrote {self.count} records to {self.path}")


def write_csv(path: PathLike, rows: Iterable[Dict[str, Any]], header: List[str]) -> int:
    """Write rows under ``header``; the header is written even when there are no rows."""
    count = 0
    with _open(path) as handle:
        writer = csv.DictWriter(handle, fieldnames=header, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in to_plain(row).items()})
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return count
