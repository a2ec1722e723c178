"""Deterministic CSV and JSON writers. Every float is written with a fixed number of significant digits."""

from __future__ import annotations

import csv
import json
import numbers
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from catpump import config


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, numbers.Integral):
        return str(int(value))
    value = float(value)
    text = format(value, f".{config.OUTPUT_DIGITS}g")
    return "0" if text == "-0" else text


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-ready values with rounded floats."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        return float(format_number(value))
    if isinstance(value, Path):
        return value.as_posix()
    return value


def write_table(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], header: str | None = None,
                delimiter: str = ",") -> Path:
    """Write rows under a column header; an optional comment line goes first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        if header:
            handle.write(header + "\n")
        writer = csv.writer(handle, delimiter=delimiter, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else format_number(cell) for cell in row])
    return path


def write_json(path: str | Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a table written by `write_table` back into column names and a float array."""
    with Path(path).open(encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, np.array([[float(x) for x in row] for row in reader])
