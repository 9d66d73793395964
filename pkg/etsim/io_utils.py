"""Flat-file outputs: CSV tables with a commented header and the JSON run report."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .lindblad_solver import TimeSeries
from .models import RunReport

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[Sequence[float]] = field(default_factory=list)


def format_number(value: float) -> str:
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def timeseries_table(name: str, series: TimeSeries) -> Table:
    """t_ms, t_omega0, then one column per sampled observable."""
    names = list(series.columns)
    rows = [
        [series.times_ms[i], series.times_omega0[i], *(series.columns[c][i] for c in names)]
        for i in range(len(series))
    ]
    return Table(name, ["t_ms", "t_omega0", *names], rows)


def render_csv(table: Table, header: dict[str, Any]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
        buf.write(f"# {key}: {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_number(x) for x in row])
    return buf.getvalue()


def write_csv(path: Path, table: Table, header: dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(table, header), encoding="utf-8")
    logger.info(f"Wrote {len(table.rows)} rows to {path}")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[float]]]:
    """Column names and numeric rows of a file written by write_csv."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, [[float(x) for x in row] for row in reader]


def write_report(path: Path, report: RunReport) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote report to {path}")
    return path


def read_report(path: Path) -> RunReport:
    return RunReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
