"""Score-report assembly and CSV/markdown rendering.

The JSON report is the complete record (micro and macro metrics, phenomenon
and category tables, OOV summary, and a per-turn appendix covering every
dataset turn exactly once). The CSV and markdown views mirror the published
table layouts: metrics columns run accuracy, precision, recall, F1, TNR,
CPT. Report bytes depend only on the inputs, so re-rendering is diffable.
"""

from __future__ import annotations

import csv
import io

from .metrics import (
    CategoryOmissionReport,
    MetricsReport,
    OOVReport,
    PhenomenonReport,
)

METRIC_COLUMNS = ("accuracy", "precision", "recall", "f1", "tnr", "cpt")


def _num(value: float | int | None, digits: int = 4) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, int):
        return str(value)
    return f"{value:.{digits}f}"


def build_report_payload(run_name: str, task: str, metrics: MetricsReport,
                         macro: dict[str, float | None],
                         phenomena: PhenomenonReport,
                         categories: CategoryOmissionReport,
                         oov: OOVReport,
                         per_turn: list[dict]) -> dict:
    return {
        "run": run_name,
        "task": task,
        "metrics": {
            "accuracy": metrics.accuracy,
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "tnr": metrics.tnr,
            "cpt": metrics.cpt,
            "gold_cpt": metrics.gold_cpt,
            "oov_total": metrics.oov_total,
            "macro": macro,
        },
        "phenomena": {
            "headline": list(phenomena.headline),
            "rows": {
                name: {
                    "tokens_total": row.tokens_total,
                    "tokens_filtered": row.tokens_filtered,
                    "ratio": row.ratio,
                }
                for name, row in phenomena.rows.items()
            },
        },
        "categories": {
            name: {
                "missing": row.missing,
                "gold_total": row.gold_total,
                "avg": row.avg,
                "ratio": row.ratio,
                "per_deprel": dict(sorted(row.per_deprel.items())),
            }
            for name, row in categories.rows.items()
        },
        "oov": {
            "total": oov.total,
            "modified_match": oov.modified_match,
            "pure_insertion": oov.pure_insertion,
            "samples": oov.samples,
        },
        "per_turn": per_turn,
    }


def render_metrics_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("run", "task") + METRIC_COLUMNS + ("gold_cpt", "oov_total"))
    m = payload["metrics"]
    writer.writerow([payload["run"], payload["task"]]
                    + [_csv_cell(m[c]) for c in METRIC_COLUMNS]
                    + [_csv_cell(m["gold_cpt"]), _csv_cell(m["oov_total"])])
    return buf.getvalue()


def render_phenomena_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("run", "task", "phenomenon", "tokens_total",
                     "tokens_filtered", "ratio"))
    for name, row in payload["phenomena"]["rows"].items():
        writer.writerow([payload["run"], payload["task"], name, row["tokens_total"],
                         row["tokens_filtered"], _csv_cell(row["ratio"])])
    return buf.getvalue()


def render_categories_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("run", "task", "category", "missing", "gold_total", "avg", "ratio"))
    for name, row in payload["categories"].items():
        writer.writerow([payload["run"], payload["task"], name, row["missing"],
                         row["gold_total"], _csv_cell(row["avg"]), _csv_cell(row["ratio"])])
    return buf.getvalue()


def _csv_cell(value) -> str:
    return "" if value is None else str(value)


def render_markdown(payload: dict) -> str:
    m = payload["metrics"]
    lines = [f"# Scoring report: {payload['run']} ({payload['task']} task)", ""]
    lines.append("## Extraction metrics")
    lines.append("")
    lines.append("| run | " + " | ".join(METRIC_COLUMNS) + " |")
    lines.append("|---|" + "---:|" * len(METRIC_COLUMNS))
    lines.append("| " + payload["run"] + " | "
                 + " | ".join(_num(m[c], 4 if c != "cpt" else 1) for c in METRIC_COLUMNS)
                 + " |")
    lines.append("")
    lines.append(f"Gold CPT: {_num(m['gold_cpt'], 1)}. OOV words: {m['oov_total']}.")
    lines.append("")
    lines.append("## Filtering by phenomenon")
    lines.append("")
    lines.append("| phenomenon | tokens (gold) | filtered | ratio % |")
    lines.append("|---|---:|---:|---:|")
    for name, row in payload["phenomena"]["rows"].items():
        marker = "**" if name in payload["phenomena"]["headline"] else ""
        lines.append(f"| {marker}{name}{marker} | {row['tokens_total']} "
                     f"| {row['tokens_filtered']} | {_num(row['ratio'], 1)} |")
    lines.append("")
    lines.append("## Missing dependency categories")
    lines.append("")
    lines.append("| category | missing | gold | avg | ratio % |")
    lines.append("|---|---:|---:|---:|---:|")
    for name, row in payload["categories"].items():
        lines.append(f"| {name} | {row['missing']} | {row['gold_total']} "
                     f"| {_num(row['avg'], 2)} | {_num(row['ratio'], 2)} |")
    lines.append("")
    lines.append("## Out-of-vocabulary words")
    lines.append("")
    lines.append(f"- total: {payload['oov']['total']}")
    lines.append(f"- modified matches: {payload['oov']['modified_match']}")
    lines.append(f"- pure insertions: {payload['oov']['pure_insertion']}")
    lines.append("")
    degraded = sum(1 for t in payload["per_turn"] if t.get("degraded"))
    lines.append(f"Turns scored: {len(payload['per_turn'])} (degraded responses: {degraded}).")
    lines.append("")
    return "\n".join(lines)
