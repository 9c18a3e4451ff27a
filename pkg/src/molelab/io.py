"""CSV and JSON output with deterministic formatting.

Floats are written with 12 significant digits. Files are first written as
``<name>.partial`` and renamed once complete, so an interrupted run never
leaves a truncated file under the final name.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

FLOAT_FORMAT = "%.12g"


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = FLOAT_FORMAT % x
    return "0" if s == "-0" else s


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if v is None:
        return ""
    return str(v)


def partial_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".partial")


def emit_csv(records: Iterable, schema: Sequence[str], path) -> Path:
    """Write ``records`` under a header of ``schema`` column names.

    A record is either a mapping with exactly the schema keys or a sequence of
    the same length as the schema. Rows keep the iteration order of
    ``records``.
    """
    schema = list(schema)
    if len(set(schema)) != len(schema):
        raise ValueError(f"duplicate column names in schema {schema}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = partial_path(path)
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema)
        for k, rec in enumerate(records):
            if isinstance(rec, Mapping):
                if set(rec) != set(schema):
                    extra = sorted(set(rec) - set(schema))
                    missing = [c for c in schema if c not in rec]
                    raise ValueError(f"record {k} does not match schema: missing {missing}, extra {extra}")
                row = [rec[c] for c in schema]
            else:
                row = list(rec)
                if len(row) != len(schema):
                    raise ValueError(f"record {k} has {len(row)} fields, schema has {len(schema)}")
            w.writerow([_format_cell(v) for v in row])
    os.replace(tmp, path)
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], rows[1:]


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = partial_path(path)
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
