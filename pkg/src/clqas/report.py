"""Aggregation of run records into per-method metric tables.

Rows are tasks; each cell is the mean over seeds; the Mean row averages the
per-task values and the Deviation row is their population standard
deviation, mirroring the benchmark table convention (dispersion across
tasks of seed-averaged metrics). Rendered as aligned text and CSV, both
byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .harness import RunRecord

__all__ = ["aggregate", "render_text", "render_csv", "load_records", "report_dir"]

_COLUMNS = ("acc", "bacc", "f1", "rwd")
_HEADERS = ("Acc", "bAcc", "F1", "Rwd")


def load_records(directory) -> list[RunRecord]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.json"))
    records = []
    for path in paths:
        data = json.loads(path.read_text())
        if isinstance(data, dict) and "task_rows" in data:
            records.append(RunRecord.from_dict(data))
    if not records:
        raise ValueError(f"no run records found in {directory}")
    return records


def _check_compatible(records: list[RunRecord], force: bool):
    hashes = sorted({r.config_hash for r in records})
    if len(hashes) > 1 and not force:
        raise ValueError(
            f"records carry {len(hashes)} different config hashes ({', '.join(hashes)}); "
            "refusing to aggregate without force"
        )


def aggregate(records: list[RunRecord], force: bool = False) -> dict:
    """Per-method tables: task rows of seed-mean metrics plus Mean/Deviation."""
    if not records:
        raise ValueError("no records to aggregate")
    _check_compatible(records, force)
    methods = sorted({r.method for r in records})
    tables = {}
    for method in methods:
        runs = sorted((r for r in records if r.method == method), key=lambda r: r.seed)
        task_ids = [row["task_id"] for row in runs[0].task_rows]
        for r in runs:
            if [row["task_id"] for row in r.task_rows] != task_ids:
                raise ValueError(f"method {method}: runs disagree on the task list")
        rows = []
        for i, task_id in enumerate(task_ids):
            cells = {}
            for col in _COLUMNS:
                values = [r.task_rows[i][col] for r in runs]
                cells[col] = None if any(v is None for v in values) else float(np.mean(values))
            rows.append({"task": task_id, **cells})
        summary = {}
        for col in _COLUMNS:
            values = [row[col] for row in rows]
            if any(v is None for v in values):
                summary[col] = (None, None)
            else:
                summary[col] = (float(np.mean(values)), float(np.std(values)))
        tables[method] = {
            "seeds": [r.seed for r in runs],
            "rows": rows,
            "mean": {c: summary[c][0] for c in _COLUMNS},
            "deviation": {c: summary[c][1] for c in _COLUMNS},
        }
    return tables


def _fmt(col: str, value) -> str:
    if value is None:
        return "---"
    return f"{value:.4f}" if col == "rwd" else f"{value:.3f}"


def render_text(tables: dict) -> str:
    lines = []
    for method, table in tables.items():
        lines.append(f"== {method} (seeds {', '.join(str(s) for s in table['seeds'])}) ==")
        header = f"{'Task':>9} " + " ".join(f"{h:>8}" for h in _HEADERS)
        lines.append(header)
        for row in table["rows"]:
            cells = " ".join(f"{_fmt(c, row[c]):>8}" for c in _COLUMNS)
            lines.append(f"{row['task']:>9} {cells}")
        lines.append(
            f"{'Mean':>9} " + " ".join(f"{_fmt(c, table['mean'][c]):>8}" for c in _COLUMNS)
        )
        lines.append(
            f"{'Deviation':>9} "
            + " ".join(f"{_fmt(c, table['deviation'][c]):>8}" for c in _COLUMNS)
        )
        lines.append("")
    return "\n".join(lines)


def render_csv(tables: dict) -> str:
    lines = ["method,task," + ",".join(_HEADERS)]
    for method, table in tables.items():
        for row in table["rows"]:
            lines.append(
                f"{method},{row['task']}," + ",".join(_fmt(c, row[c]) for c in _COLUMNS)
            )
        lines.append(
            f"{method},Mean," + ",".join(_fmt(c, table["mean"][c]) for c in _COLUMNS)
        )
        lines.append(
            f"{method},Deviation,"
            + ",".join(_fmt(c, table["deviation"][c]) for c in _COLUMNS)
        )
    return "\n".join(lines) + "\n"


def report_dir(directory, force: bool = False) -> tuple[str, str]:
    """Aggregate every record in a directory into (text, csv) renderings."""
    tables = aggregate(load_records(directory), force=force)
    return render_text(tables), render_csv(tables)
