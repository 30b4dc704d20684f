"""Aligned-text and CSV rendering of comparison rows, eval reports and run logs."""
from __future__ import annotations

import csv
import io
from typing import Sequence

TABLE_COLUMNS = (
    ("name", "Model"),
    ("PCK", "PCK"),
    ("PCK0.1", "PCK^0.1"),
    ("AP", "AP"),
    ("AP50", "AP^0.5"),
    ("AP75", "AP^0.75"),
    ("AR", "AR"),
    ("AR50", "AR^0.5"),
    ("AR75", "AR^0.75"),
    ("Kpts", "Kpts"),
    ("Avg", "Avg"),
    ("union_pck_min", "Union^0.1 min"),
)
PERCENT_KEYS = {"PCK", "PCK0.1", "AP", "AP50", "AP75", "AR", "AR50", "AR75", "Avg", "union_pck_min"}


def _cell(key, value) -> str:
    if value is None:
        return "-"
    if key in PERCENT_KEYS:
        return f"{100.0 * value:.2f}"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def align(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def comparison_table(rows: Sequence[dict], columns=TABLE_COLUMNS) -> str:
    return align([c[1] for c in columns], [[_cell(k, r.get(k)) for k, _ in columns] for r in rows])


def comparison_csv(rows: Sequence[dict], columns=TABLE_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c[1] for c in columns])
    for r in rows:
        w.writerow(["" if r.get(k) is None else r.get(k) for k, _ in columns])
    return buf.getvalue()


def eval_report_table(report: dict) -> str:
    per = report.get("per_keypoint", {})
    rows = [[k, f"{100.0 * v:.2f}"] for k, v in per.items()]
    rows += [[k, "-" if v is None else f"{100.0 * v:.2f}"] for k, v in report.get("means", {}).items()]
    return align(["Keypoint/metric", "Score"], rows)


def runlog_columns(runlog: dict) -> list[str]:
    teachers = sorted({t for e in runlog.get("epochs", []) for t in e.get("distill", {})})
    return ["epoch", "lr", "ck", *[f"L_D[{t}]" for t in teachers], "ck_term", "distill_term", "total"]


def _runlog_rows(runlog: dict) -> list[list]:
    cols = runlog_columns(runlog)
    rows = []
    for e in runlog.get("epochs", []):
        row = []
        for c in cols:
            if c.startswith("L_D["):
                row.append(e["distill"].get(c[4:-1]))
            else:
                row.append(e.get(c))
        rows.append(row)
    return rows


def runlog_table(runlog: dict) -> str:
    fmt = [[str(v) if isinstance(v, int) else f"{v:.6g}" for v in row] for row in _runlog_rows(runlog)]
    return align(runlog_columns(runlog), fmt)


def runlog_csv(runlog: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(runlog_columns(runlog))
    w.writerows(_runlog_rows(runlog))
    return buf.getvalue()
