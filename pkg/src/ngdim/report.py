"""Plain-text report rendering.

A report is a single self-describing document in the ``ngdim-report 1``
schema: a schema line, a ``kind`` line, then ``[section]`` blocks of
``key = value`` pairs followed by ``[table NAME]`` blocks whose first
line names the columns and whose remaining lines are comma-separated
rows.  Floats are rendered with :func:`repr`, i.e. the shortest string
that round-trips, so a report is byte-stable for identical inputs and
exact when parsed back.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = [
    "SCHEMA",
    "format_value",
    "render_report",
    "format_table",
    "write_text",
    "write_csv",
]

SCHEMA = "ngdim-report 1"


def format_value(value) -> str:
    """Deterministic text form of a report value."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def render_report(kind: str, sections, tables=()) -> str:
    """Render a full report document.

    ``sections`` is an iterable of ``(name, mapping)`` and ``tables``
    one of ``(name, columns, rows)`` with ``rows`` a list of dicts; the
    given orders are preserved verbatim.
    """
    lines = [SCHEMA, f"kind = {kind}", ""]
    for name, mapping in sections:
        lines.append(f"[{name}]")
        for key, value in mapping.items():
            lines.append(f"{key} = {format_value(value)}")
        lines.append("")
    for name, columns, rows in tables:
        lines.append(f"[table {name}]")
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(format_value(row[c]) for c in columns))
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def format_table(columns, rows) -> list[str]:
    """Space-aligned lines for terminal output (header + one per row)."""
    header = [str(c) for c in columns]
    cells = [[format_value(row[c]) for c in columns] for row in rows]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in cells)) if cells else len(header[i])
        for i in range(len(header))
    ]
    def fmt(parts):
        return "  ".join(part.ljust(w) for part, w in zip(parts, widths)).rstrip()
    return [fmt(header)] + [fmt(r) for r in cells]


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def write_csv(path, columns, rows) -> None:
    """Write dict rows as CSV with the given column order."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
