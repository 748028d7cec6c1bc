"""Plain-text emission: 9 significant digits, ``#`` comment lines, flat JSON."""

from __future__ import annotations

import csv
import json
import math
from typing import Iterable, Sequence, TextIO

SIG_DIGITS = 9


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{SIG_DIGITS}g}"


def write_csv(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = ()) -> None:
    for line in comments:
        stream.write(f"# {line}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float)) else v for v in row])


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    if isinstance(v, float):
        v = float(v)
        if math.isfinite(v):
            return float(fmt(v))
        return fmt(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(e) for e in v]
    try:  # numpy scalars / arrays
        return _jsonable(v.tolist())
    except AttributeError:
        return str(v)


def dumps_flat(record: dict) -> str:
    return json.dumps({k: _jsonable(v) for k, v in record.items()}, sort_keys=True)
