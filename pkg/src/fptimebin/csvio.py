"""CSV writing/reading with a comment preamble.

Every numeric artifact this package emits is a CSV file whose first lines are
``# key=value`` comments (always including the config hash), followed by one
header row and the data rows.  Floats are written with ``repr`` so files
round-trip bit-exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence


def format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence],
              comments: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        for key, value in (comments or {}).items():
            handle.write(f"# {key}={format_value(value)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Read a CSV written by :func:`write_csv`.

    Returns (comments, header, rows) with all cells as strings.
    """
    comments: dict[str, str] = {}
    header: list[str] = []
    rows: list[list[str]] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    comments[key.strip()] = value
                continue
            cells = next(csv.reader([line]))
            if not header:
                header = cells
            else:
                rows.append(cells)
    return comments, header, rows
