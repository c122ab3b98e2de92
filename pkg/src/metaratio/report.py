"""Result tables (CSV) and small-multiple panel plots (SVG).

The CSV is tidy: one row per (scenario, method, metric), deterministically
sorted, values at 17 significant digits, the infinity sentinel written as the
string "inf".  Figures are panel grids (rows = K, columns = n, x-axis = tau2,
one line per method) rendered to SVG through matplotlib with a fixed hash
salt and no date metadata, so re-running produces byte-identical files.
"""

from __future__ import annotations

import csv
import math
import os
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .model import (
    DomainError,
    NonRectangularGridError,
    ScenarioResult,
    SchemaError,
)

__all__ = [
    "CSV_COLUMNS",
    "METRICS",
    "METHOD_STYLES",
    "results_to_rows",
    "write_results_csv",
    "read_results_rows",
    "render_panel_grid",
]

CSV_COLUMNS = (
    "lambda",
    "tau2",
    "k",
    "n",
    "pipeline",
    "method",
    "metric",
    "value",
    "mc_se",
    "reps",
    "failures",
)

METRICS = ("bias_tau2", "bias_lambda", "coverage_tau2", "coverage_lambda")

# Fixed palette so figures are comparable across runs.  Colors are the
# matplotlib "tab" hues pinned by hex.
METHOD_STYLES: dict[str, dict] = {
    "DL": {"color": "#1f77b4", "marker": "o"},
    "REML": {"color": "#ff7f0e", "marker": "s"},
    "MP": {"color": "#2ca02c", "marker": "^"},
    "J": {"color": "#d62728", "marker": "v"},
    "QP": {"color": "#9467bd", "marker": "D"},
    "BJ": {"color": "#8c564b", "marker": "P"},
    "PL": {"color": "#e377c2", "marker": "X"},
    "IV-DL": {"color": "#1f77b4", "marker": "o"},
    "IV-REML": {"color": "#ff7f0e", "marker": "s"},
    "IV-MP": {"color": "#2ca02c", "marker": "^"},
    "IV-J": {"color": "#d62728", "marker": "v"},
    "SSW": {"color": "#7f7f7f", "marker": "*"},
    "HKSJ": {"color": "#bcbd22", "marker": "D"},
    "HKSJ-MP": {"color": "#17becf", "marker": "P"},
    "SSW-MP": {"color": "#7f7f7f", "marker": "*"},
}


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def results_to_rows(results: Iterable[ScenarioResult]) -> list[dict]:
    """Flatten scenario results into tidy rows (native Python values)."""
    rows: list[dict] = []
    for res in results:
        sc = res.scenario
        base = {
            "lambda": sc.true_lrr,
            "tau2": sc.tau2,
            "k": sc.k,
            "n": sc.n_total,
            "pipeline": sc.pipeline,
            "reps": res.reps,
        }
        for metric, values, ses in (
            ("bias_tau2", res.bias_tau2, res.bias_tau2_se),
            ("bias_lambda", res.bias_lambda, res.bias_lambda_se),
            ("coverage_tau2", res.coverage_tau2, res.coverage_tau2_se),
            ("coverage_lambda", res.coverage_lambda, res.coverage_lambda_se),
        ):
            for method, value in values.items():
                rows.append(
                    dict(
                        base,
                        method=method,
                        metric=metric,
                        value=value,
                        mc_se=ses[method],
                        failures=res.failures.get(f"{metric}/{method}", 0),
                    )
                )
    rows.sort(
        key=lambda r: (
            r["lambda"],
            r["tau2"],
            r["k"],
            r["n"],
            r["pipeline"],
            r["method"],
            r["metric"],
        )
    )
    return rows


def write_results_csv(results: Sequence[ScenarioResult], path: str) -> None:
    """Write the tidy results table; byte-identical for identical inputs."""
    if not results:
        raise DomainError("no results to write")
    rows = results_to_rows(results)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in rows:
                writer.writerow(
                    (
                        _fmt(r["lambda"]),
                        _fmt(r["tau2"]),
                        str(r["k"]),
                        str(r["n"]),
                        r["pipeline"],
                        r["method"],
                        r["metric"],
                        _fmt(r["value"]),
                        _fmt(r["mc_se"]),
                        str(r["reps"]),
                        str(r["failures"]),
                    )
                )
    except OSError as exc:
        raise DomainError(f"cannot write results to {path}: {exc}") from exc


def read_results_rows(path: str) -> list[dict]:
    """Read a results CSV back into tidy rows.

    Raises SchemaError when the header or a value does not follow the
    documented schema.
    """
    def parse_float(text: str) -> float:
        if text == "inf":
            return math.inf
        return float(text)

    rows: list[dict] = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(CSV_COLUMNS):
                raise SchemaError(
                    f"unexpected header {header}; expected {list(CSV_COLUMNS)}"
                )
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(CSV_COLUMNS):
                    raise SchemaError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
                try:
                    rows.append(
                        {
                            "lambda": parse_float(rec[0]),
                            "tau2": parse_float(rec[1]),
                            "k": int(rec[2]),
                            "n": int(rec[3]),
                            "pipeline": rec[4],
                            "method": rec[5],
                            "metric": rec[6],
                            "value": parse_float(rec[7]),
                            "mc_se": parse_float(rec[8]),
                            "reps": int(rec[9]),
                            "failures": int(rec[10]),
                        }
                    )
                except ValueError as exc:
                    raise SchemaError(f"line {lineno}: {exc}") from exc
    except OSError as exc:
        raise SchemaError(f"cannot read results from {path}: {exc}") from exc
    return rows


_METRIC_LABELS = {
    "bias_tau2": "bias of between-study variance estimators",
    "bias_lambda": "bias of overall-effect estimators",
    "coverage_tau2": "coverage of between-study variance intervals",
    "coverage_lambda": "coverage of overall-effect intervals",
}


def render_panel_grid(
    results,
    metric: str,
    lambda_value: float,
    path: str,
    pipeline: str | None = None,
) -> None:
    """Render one panel grid to SVG.

    ``results`` is either a list of ScenarioResult or tidy rows from
    :func:`read_results_rows`.  Panels form a rectangular grid with K down
    the rows and n across the columns; each panel plots one line per method
    against tau2, with a reference line at 0 (bias) or the nominal level
    (coverage).
    """
    if metric not in METRICS:
        raise SchemaError(f"unknown metric {metric!r}; valid metrics: {METRICS}")
    rows = results if results and isinstance(results[0], dict) else results_to_rows(results)
    pipelines = sorted({r["pipeline"] for r in rows})
    if pipeline is None:
        if len(pipelines) > 1:
            raise DomainError(
                f"results mix pipelines {pipelines}; pass pipeline= to choose one"
            )
        pipeline = pipelines[0] if pipelines else "usual"
    rows = [
        r
        for r in rows
        if r["metric"] == metric
        and r["pipeline"] == pipeline
        and r["lambda"] == lambda_value
    ]
    if not rows:
        raise NonRectangularGridError(
            f"no rows for metric={metric}, lambda={lambda_value}, pipeline={pipeline}"
        )

    ks = sorted({r["k"] for r in rows})
    ns = sorted({r["n"] for r in rows})
    present = {(r["k"], r["n"]) for r in rows}
    missing = [(k, n) for k in ks for n in ns if (k, n) not in present]
    if missing:
        raise NonRectangularGridError(
            f"(K, n) grid is not rectangular; missing cells: {missing}"
        )
    methods = sorted({r["method"] for r in rows})

    ref = 0.0 if metric.startswith("bias") else 0.95
    with matplotlib.rc_context({"svg.hashsalt": "metaratio"}):
        fig, axes = plt.subplots(
            len(ks),
            len(ns),
            figsize=(3.0 * len(ns), 2.4 * len(ks)),
            squeeze=False,
            sharex=True,
        )
        for i, k in enumerate(ks):
            for j, n in enumerate(ns):
                ax = axes[i][j]
                panel = [r for r in rows if r["k"] == k and r["n"] == n]
                for method in methods:
                    pts = sorted(
                        ((r["tau2"], r["value"]) for r in panel if r["method"] == method)
                    )
                    if not pts:
                        continue
                    style = METHOD_STYLES.get(method, {"color": "#333333", "marker": "."})
                    ax.plot(
                        [p[0] for p in pts],
                        [p[1] for p in pts],
                        label=method,
                        color=style["color"],
                        marker=style["marker"],
                        markersize=3,
                        linewidth=1.0,
                    )
                ax.axhline(ref, color="#888888", linewidth=0.8, linestyle="--")
                ax.set_title(f"K={k}, n={n}", fontsize=8)
                ax.tick_params(labelsize=7)
                if i == len(ks) - 1:
                    ax.set_xlabel("between-study variance", fontsize=8)
                if j == 0:
                    ax.set_ylabel(metric.replace("_", " "), fontsize=8)
        handles, labels = axes[0][0].get_legend_handles_labels()
        if handles:
            fig.legend(handles, labels, loc="lower center", ncol=min(len(labels), 7), fontsize=8)
        fig.suptitle(
            f"{_METRIC_LABELS[metric]} (true overall effect {lambda_value:g}, "
            f"{pipeline} pipeline)",
            fontsize=10,
        )
        fig.tight_layout(rect=(0, 0.06, 1, 0.96))
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
