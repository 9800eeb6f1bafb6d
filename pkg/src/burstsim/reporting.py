"""Report assembly and serialization: aligned tables, CSV, and JSON.

Numeric fields are serialized with ``repr`` so every float round-trips
losslessly through both machine-readable formats.  JSON reports carry a
``schema_version`` field; CSV interleaves sections with ``# section:`` marker
lines that readers skip.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

Value = int | float | str


def _py(value) -> Value:
    """Coerce numpy scalars so repr/json never leak np.float64 wrappers."""
    if isinstance(value, (np.integer, np.bool_)):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass
class Section:
    name: str
    headers: list[str]
    rows: list[list[Value]]


@dataclass
class Report:
    command: str
    seed: int
    params: dict[str, Value]
    sections: list[Section] = field(default_factory=list)

    def add(self, name: str, headers: list[str], rows: list[list[Value]]) -> None:
        clean = [[_py(v) for v in row] for row in rows]
        self.sections.append(Section(name=name, headers=headers, rows=clean))

    def __post_init__(self):
        self.params = {k: _py(v) for k, v in self.params.items()}


def _cell(value: Value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_table(report: Report) -> str:
    out = io.StringIO()
    out.write(f"# {report.command} (seed={report.seed})\n")
    for key, val in report.params.items():
        out.write(f"# {key} = {_cell(val)}\n")
    for section in report.sections:
        out.write(f"\n== {section.name} ==\n")
        cells = [section.headers] + [[_cell(v) for v in row] for row in section.rows]
        widths = [max(len(r[c]) for r in cells) for c in range(len(section.headers))]
        for r_idx, row in enumerate(cells):
            line = "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row))
            out.write(line.rstrip() + "\n")
            if r_idx == 0:
                out.write("  ".join("-" * w for w in widths) + "\n")
    return out.getvalue()


def to_csv(report: Report) -> str:
    out = io.StringIO()
    out.write(f"# command: {report.command}\n")
    out.write(f"# seed: {report.seed}\n")
    for key, val in report.params.items():
        out.write(f"# param {key}: {_cell(val)}\n")
    for section in report.sections:
        out.write(f"# section: {section.name}\n")
        out.write(",".join(section.headers) + "\n")
        for row in section.rows:
            out.write(",".join(_cell(v) for v in row) + "\n")
    return out.getvalue()


def to_json(report: Report) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": report.command,
        "seed": report.seed,
        "params": report.params,
        "sections": [
            {
                "name": s.name,
                "headers": s.headers,
                "rows": [[v for v in row] for row in s.rows],
            }
            for s in report.sections
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def render(report: Report, fmt: str) -> str:
    if fmt == "table":
        return to_table(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    raise ValueError(f"unknown output format {fmt!r}, expected table/csv/json")


def parse_csv_section(text: str, name: str) -> tuple[list[str], list[list[str]]]:
    """Pull one section's header and rows back out of the CSV format."""
    lines = text.splitlines()
    try:
        at = lines.index(f"# section: {name}")
    except ValueError:
        raise KeyError(f"no section named {name!r}") from None
    headers = lines[at + 1].split(",")
    rows = []
    for line in lines[at + 2 :]:
        if line.startswith("#"):
            break
        rows.append(line.split(","))
    return headers, rows
