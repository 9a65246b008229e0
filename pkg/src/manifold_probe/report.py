"""Comparison tables and plot-ready exports from evaluation summaries.

The comparison table pivots to benchmark layout: one row per method, one
column per (dataset, way, shot) setting, cells formatted `AA.AA ± C.CC`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .curvefit import LogisticFit
from .errors import DataError
from .harness import EvalSummary, LayerAccuracy


def format_cell(mean_pct: float, halfwidth_pct: float) -> str:
    """`AA.AA ± C.CC` with banker's rounding to two decimals."""
    return f"{mean_pct:.2f} ± {halfwidth_pct:.2f}"


@dataclass(frozen=True)
class ReportRow:
    label: str
    dataset: str
    way: int
    shot: int
    cell: str
    fingerprint: str


def _method_label(fingerprint: str) -> str:
    config = json.loads(fingerprint)
    reduction = config["reduction"]
    if reduction == "raw":
        method = "raw"
    else:
        method = f"{reduction}{config['output_dim']}"
    classifier = config["classifier"]
    if classifier == "knn":
        classifier = f"knn{config['k']}"
    return f"layer{config['layer_id']}-{method}-{config['metric']}-{classifier}"


def build_rows(summaries: list[tuple[str, EvalSummary]]) -> list[ReportRow]:
    """One row per summary; `summaries` pairs a dataset name with a summary."""
    if not summaries:
        raise DataError("no summaries to report")
    rows = []
    for dataset, summary in summaries:
        config = json.loads(summary.config_fingerprint)
        rows.append(
            ReportRow(
                label=_method_label(summary.config_fingerprint),
                dataset=dataset,
                way=config["sampler"]["way"],
                shot=config["sampler"]["shot"],
                cell=format_cell(summary.mean_accuracy, summary.ci_halfwidth_95),
                fingerprint=summary.config_fingerprint,
            )
        )
    rows.sort(key=lambda r: (r.dataset, r.way, r.shot, r.fingerprint))
    return rows


def build_payload_rows(payloads: list[dict]) -> list[ReportRow]:
    """Rows from persisted summary JSON payloads (as written by the harness)."""
    if not payloads:
        raise DataError("no summaries to report")
    rows = []
    for payload in payloads:
        for key in ("dataset", "mean_accuracy_pct", "ci95_halfwidth_pct", "config_fingerprint"):
            if key not in payload:
                raise DataError(f"summary payload missing '{key}'")
        fingerprint = payload["config_fingerprint"]
        config = json.loads(fingerprint)
        rows.append(
            ReportRow(
                label=_method_label(fingerprint),
                dataset=payload["dataset"],
                way=config["sampler"]["way"],
                shot=config["sampler"]["shot"],
                cell=format_cell(
                    payload["mean_accuracy_pct"], payload["ci95_halfwidth_pct"]
                ),
                fingerprint=fingerprint,
            )
        )
    rows.sort(key=lambda r: (r.dataset, r.way, r.shot, r.fingerprint))
    return rows


def pivot_table(rows: list[ReportRow]) -> tuple[list[str], list[list[str]]]:
    """Benchmark layout: header `method, <dataset> <W>w<S>s, ...` and one line
    per method. A method missing a setting gets an empty cell. Method order
    follows the fingerprint sort for stability."""
    if not rows:
        raise DataError("no rows to pivot")
    settings = sorted({(r.dataset, r.way, r.shot) for r in rows})
    methods: list[str] = []
    method_keys: dict[str, str] = {}
    for row in sorted(rows, key=lambda r: (r.fingerprint, r.dataset)):
        if row.label not in method_keys:
            method_keys[row.label] = row.fingerprint
            methods.append(row.label)
    cells = {(r.label, (r.dataset, r.way, r.shot)): r.cell for r in rows}
    headers = ["method"] + [f"{d} {w}w{s}s" for d, w, s in settings]
    table = [
        [method] + [cells.get((method, setting), "") for setting in settings]
        for method in methods
    ]
    return headers, table


def comparison_csv(rows: list[ReportRow]) -> str:
    headers, table = pivot_table(rows)
    lines = [",".join(headers)]
    lines.extend(",".join(line) for line in table)
    return "\n".join(lines) + "\n"


def comparison_text(rows: list[ReportRow]) -> str:
    """Aligned text rendering of the pivot table."""
    headers, table = pivot_table(rows)
    widths = [
        max(len(headers[i]), *(len(line[i]) for line in table))
        for i in range(len(headers))
    ]

    def fmt(entry: list[str]) -> str:
        return "  ".join(entry[i].ljust(widths[i]) for i in range(len(entry))).rstrip()

    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(line) for line in table)
    return "\n".join(lines) + "\n"


def layer_curve_csv(rows: list[LayerAccuracy], fit: LogisticFit | None = None) -> str:
    """Long-format (layer, accuracy, fit_value) rows for plotting."""
    ordered = sorted(rows, key=lambda r: r.layer_id)
    lines = ["layer,accuracy,fit_value"]
    for row in ordered:
        fit_value = fit.predict(float(row.layer_id)) if fit is not None else ""
        fit_text = f"{float(fit_value)!r}" if fit is not None else ""
        lines.append(f"{row.layer_id},{row.accuracy!r},{fit_text}")
    return "\n".join(lines) + "\n"


def write_report(
    summaries: list[tuple[str, EvalSummary]], out_dir: str | Path
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = build_rows(summaries)
    csv_path = out_dir / "comparison.csv"
    text_path = out_dir / "comparison.txt"
    csv_path.write_text(comparison_csv(rows))
    text_path.write_text(comparison_text(rows))
    return {"csv": csv_path, "text": text_path}
