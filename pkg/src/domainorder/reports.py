"""CSV/JSON output helpers."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, Fraction)) or type(value).__module__ == "numpy":
        x = float(value)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(value)


def write_csv_report(rows: Iterable, schema: Sequence[str], path) -> Path:
    """Header plus one line per row; floats with 17 significant digits, LF endings.

    Rows are mappings keyed by the schema or sequences in schema order.
    """
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(schema)
            for row in rows:
                if isinstance(row, Mapping):
                    missing = [c for c in schema if c not in row]
                    if missing:
                        raise ValueError(f"row is missing columns {missing}")
                    values = [row[c] for c in schema]
                else:
                    values = list(row)
                    if len(values) != len(schema):
                        raise ValueError(f"row has {len(values)} cells, schema has {len(schema)}")
                writer.writerow([_cell(v) for v in values])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv_report(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(data, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
