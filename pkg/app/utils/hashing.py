"""Content hashes for run provenance."""

import hashlib
import json
from typing import Any

from app.utils.io import to_plain


def canonical_json(data: Any) -> str:
    """Compact sorted-key JSON used for hashing."""
    return json.dumps(to_plain(data), sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data: Any) -> str:
    """SHA-256 of the canonical JSON form of ``data``."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()
