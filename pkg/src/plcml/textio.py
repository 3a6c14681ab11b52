"""Exact-round-trip text writers shared by every exporter.

Floats are written with 17 significant digits, which is enough to recover
the identical IEEE double on read-back.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    end = " " * (indent * level) if indent else ""
    nl = "\n" if indent else ""
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
            for k, v in obj.items()
        ]
        return "{" + nl + ("," + nl).join(items) + nl + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
               for v in obj):
            # numeric arrays stay on one line
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[" + nl + ("," + nl).join(items) + nl + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    return json.dumps(str(obj))


def dumps(obj, indent: int = 1) -> str:
    """JSON text with 17-significant-digit floats."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows) -> None:
    """Write ``rows`` under ``header``; float cells use :func:`fmt`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([
                fmt(v) if isinstance(v, (float, np.floating)) else v for v in row
            ])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
