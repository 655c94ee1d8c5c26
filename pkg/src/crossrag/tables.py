"""Typed in-memory tables loaded from RFC 4180 CSV files.

A CSV file must be UTF-8 with a header row. Column types are inferred from
the data cells: a column is `integer` when every non-empty cell parses as a
decimal integer, else `real` when every non-empty cell parses as a decimal
float, else `boolean` when every non-empty cell is true/false (any case),
else `text`. Empty cells become nulls of the column type; they never force
a column to text.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import EmptyFileError, MalformedCsvError, SourceUnreadableError

COLUMN_TYPES = ("integer", "real", "boolean", "text")

_INT_RE = re.compile(r"[+-]?[0-9]+\Z")
_REAL_RE = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z")

Cell = "int | float | bool | str | None"


def infer_column_type(cells: list[str]) -> str:
    """Infer one column's type from its raw string cells."""
    non_empty = [c for c in cells if c != ""]
    if all(_INT_RE.match(c) for c in non_empty):
        return "integer"
    if all(_REAL_RE.match(c) for c in non_empty):
        return "real"
    if all(c.lower() in ("true", "false") for c in non_empty):
        return "boolean"
    return "text"


def convert_cell(raw: str, column_type: str):
    """Convert one raw cell to its typed value; empty cells become None."""
    if raw == "":
        return None
    if column_type == "integer":
        return int(raw)
    if column_type == "real":
        return float(raw)
    if column_type == "boolean":
        return raw.lower() == "true"
    return raw


@dataclass(frozen=True)
class Table:
    """A named, column-major table with per-column types."""

    name: str
    headers: tuple[str, ...]
    column_types: tuple[str, ...]
    columns: tuple[tuple, ...]

    def __post_init__(self) -> None:
        if len(self.headers) != len(self.column_types):
            raise ValueError("headers and column_types must have equal length")
        if len(self.columns) != len(self.headers):
            raise ValueError("columns and headers must have equal length")
        for ctype in self.column_types:
            if ctype not in COLUMN_TYPES:
                raise ValueError(f"unknown column type: {ctype!r}")

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column_index(self, name: str) -> int:
        return self.headers.index(name)

    def column(self, name: str) -> tuple:
        return self.columns[self.column_index(name)]

    def rows(self) -> Iterator[tuple]:
        return iter(zip(*self.columns)) if self.columns else iter(())


def schema_table(name: str, headers: tuple[str, ...],
                 column_types: tuple[str, ...]) -> Table:
    """A zero-row table carrying only schema, for validating generated SQL."""
    empty = tuple(() for _ in headers)
    return Table(name=name, headers=tuple(headers),
                 column_types=tuple(column_types), columns=empty)


def read_csv_rows(path: Path) -> tuple[tuple[str, ...], list[tuple[str, ...]]]:
    """Read the header and raw string rows of an RFC 4180 CSV file."""
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise SourceUnreadableError(f"{path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle, strict=True)
        try:
            rows = list(reader)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise MalformedCsvError(f"{path}: {exc}") from exc
    if not rows:
        raise EmptyFileError(f"{path}: no header row")
    header, data = rows[0], rows[1:]
    if len(set(header)) != len(header):
        raise MalformedCsvError(f"{path}: duplicate header names")
    if not header or any(name == "" for name in header):
        raise MalformedCsvError(f"{path}: empty header name")
    width = len(header)
    for i, row in enumerate(data, start=2):
        if len(row) != width:
            raise MalformedCsvError(
                f"{path}: row {i}: expected {width} fields, got {len(row)}")
    return tuple(header), [tuple(row) for row in data]


def table_from_rows(name: str, headers: tuple[str, ...],
                    rows: list[tuple[str, ...]]) -> Table:
    """Build a typed Table from raw string rows."""
    raw_columns = [[row[i] for row in rows] for i in range(len(headers))]
    types = tuple(infer_column_type(col) for col in raw_columns)
    columns = tuple(
        tuple(convert_cell(cell, types[i]) for cell in raw_columns[i])
        for i in range(len(headers)))
    return Table(name=name, headers=headers, column_types=types,
                 columns=columns)


def load_csv(path: Path, name: str) -> Table:
    """Load a CSV file into a typed Table named `name`."""
    headers, rows = read_csv_rows(Path(path))
    return table_from_rows(name, headers, rows)


def render_text_table(headers: tuple[str, ...], rows: list[tuple]) -> str:
    """Render rows as an aligned plain-text table (for prompts and traces)."""
    def show(value) -> str:
        if value is None:
            return ""
        if value is True:
            return "true"
        if value is False:
            return "false"
        return str(value)

    cells = [[show(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(parts: list[str]) -> str:
        return " | ".join(p.ljust(w) for p, w in zip(parts, widths)).rstrip()
    out = [line(list(headers)), line(["-" * w for w in widths])]
    out.extend(line(row) for row in cells)
    return "\n".join(out)
