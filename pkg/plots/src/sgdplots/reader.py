"""CSV loading with strict schema checks.

The experiment runner's files are plain comma-separated text with a single
header line; every figure declares the columns it needs, and a file that
lacks one is an error naming the column — never a silently empty plot.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


class PlotError(ValueError):
    pass


@dataclass(frozen=True)
class Table:
    path: str
    columns: tuple[str, ...]
    rows: tuple[dict[str, str], ...]

    def floats(self, column: str) -> list[float]:
        try:
            return [float(r[column]) for r in self.rows]
        except ValueError as exc:
            raise PlotError(f"{self.path}: non-numeric value in {column!r}: {exc}") from None


def load_table(path: str | Path, required: Sequence[str]) -> Table:
    path = Path(path)
    if not path.exists():
        raise PlotError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].strip():
        raise PlotError(f"{path}: empty CSV")
    columns = tuple(c.strip() for c in lines[0].split(","))
    for col in required:
        if col not in columns:
            raise PlotError(f"{path}: missing column {col!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(columns):
            raise PlotError(
                f"{path}: line {lineno} has {len(fields)} fields, expected {len(columns)}"
            )
        rows.append(dict(zip(columns, fields)))
    if not rows:
        raise PlotError(f"{path}: empty CSV")
    return Table(path=str(path), columns=columns, rows=tuple(rows))
