"""Report rendering: RFC-4180 CSV and Markdown tables."""

from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np

from ..errors import ContractError

HEADER = ["dataset", "shift", "method", "accuracy", "seeds"]


def _format_accuracy(accuracies: Sequence[float]) -> str:
    values = np.asarray(accuracies, dtype=np.float64) * 100.0
    mean = values.mean()
    if values.size < 2:
        return f"{mean:.2f}"
    std = values.std(ddof=1)
    return f"{mean:.2f}±{std:.2f}"


def _rows(reports) -> list[list[str]]:
    rows = []
    for r in reports:
        accs = [s.accuracy for s in r.seed_results if s.error is None]
        if not accs:
            raise ContractError(f"report {r.config.name!r} has no successful seeds")
        rows.append([
            r.config.name,
            r.config.shift_label(),
            r.config.method,
            _format_accuracy(accs),
            str(len(accs)),
        ])
    return rows


def export_table(reports) -> tuple[str, str]:
    """(csv_text, markdown_text) with one row per experiment report."""
    reports = list(reports)
    if not reports:
        raise ContractError("export_table needs at least one report")
    rows = _rows(reports)

    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(HEADER)
    writer.writerows(rows)
    csv_text = buf.getvalue()

    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(HEADER)]
    def fmt(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    md_lines = [fmt(HEADER), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    md_lines.extend(fmt(r) for r in rows)
    return csv_text, "\n".join(md_lines) + "\n"
