"""Deterministic CSV/JSON emission shared by the result writers.

All numeric output uses 12 significant digits with a ``.`` decimal point
and no locale dependence, so repeated runs of an identical configuration
produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path


def format_number(x) -> str:
    """12-significant-digit, locale-free rendering of a scalar."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int,)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def write_csv(path, header, rows) -> Path:
    """Write rows of scalars under a header; numbers formatted canonically."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def canonical_json(obj) -> str:
    """Sorted-key JSON with stable float rendering."""
    return json.dumps(_rounded(obj), sort_keys=True, indent=2) + "\n"


def _rounded(obj):
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, float):
        # round-trip through the canonical format so JSON floats match CSV
        return float(format_number(obj))
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def config_hash(config: dict) -> str:
    """Short stable digest of a configuration mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
