"""CSV data ingestion and result envelopes."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import ParseError

__all__ = ["load_data", "write_data", "envelope", "dumps"]


def _parse_float(cell: str) -> float:
    # float() ignores locale; reject the spellings it accepts for non-finite values
    value = float(cell)
    if not math.isfinite(value):
        raise ValueError(cell)
    return value


def load_data(path: str | Path) -> NDArray[np.float64]:
    """Read an n x p matrix from CSV (rows are observations).

    A single non-numeric first row is taken as a header and skipped.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(text.splitlines())) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path} contains no data")

    first_line, first = rows[0]
    try:
        [_parse_float(c) for c in first]
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path} has a header but no data", first_line) from None

    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for k, (line, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line)
        for j, cell in enumerate(row):
            try:
                out[k, j] = _parse_float(cell.strip())
            except ValueError:
                raise ParseError(f"non-numeric or non-finite cell {cell!r} in column {j + 1}", line) from None
    return out


def write_data(path: str | Path, data: NDArray[np.float64]) -> None:
    """Write a matrix as headerless CSV with 17 significant digits (lossless round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(data, dtype=np.float64):
            w.writerow([format(float(v), ".17g") for v in row])


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "to_json"):
        return _jsonable(obj.to_json())
    return obj


def envelope(kind: str, config: dict[str, Any], payload: Any) -> dict[str, Any]:
    from . import __version__

    return {
        "tool": "spikecov",
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "kind": kind,
        "config": _jsonable(config),
        "payload": _jsonable(payload),
    }


def dumps(doc: Any) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False)
