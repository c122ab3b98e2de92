"""Command-line front door: analyze real datasets, run grids, render plots.

Data goes to stdout or the requested files; diagnostics go to stderr; the
exit code is 0 exactly when no error occurred.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from typing import Sequence

from . import report, simgrid
from .effects import EQ3_SIGNS, lrr, lrr_bias_corrected
from .heterogeneity import tau2_dl, tau2_j, tau2_mp, tau2_reml
from .model import (
    ArmSummary,
    MetaRatioError,
    ParseError,
    SchemaError,
    StudySummary,
    validate_study,
)
from .pooling import ci_hksj, ci_iv_normal, ci_ssw_t, pool_iv, pool_ssw
from .tau_intervals import bj_interval, j_interval, pl_interval, qp_interval

ANALYZE_HEADER = ("study_id", "n_t", "mean_t", "sd_t", "n_c", "mean_c", "sd_c")

THREADS_ENV = "METARATIO_THREADS"


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def read_studies_csv(path: str) -> list[StudySummary]:
    """Parse the analyze input schema, reporting the line of any bad value."""
    studies: list[StudySummary] = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(ANALYZE_HEADER):
            raise ParseError(
                f"{path}:1: expected header {','.join(ANALYZE_HEADER)}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(ANALYZE_HEADER):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(ANALYZE_HEADER)} fields, got {len(rec)}"
                )
            try:
                studies.append(
                    StudySummary(
                        id=rec[0].strip(),
                        treatment=ArmSummary(
                            n=int(rec[1]), mean=float(rec[2]), sd=float(rec[3])
                        ),
                        control=ArmSummary(
                            n=int(rec[4]), mean=float(rec[5]), sd=float(rec[6])
                        ),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return studies


def _analyze_rows(studies, bias_correction: bool, eq3_sign: str):
    if bias_correction:
        return [lrr_bias_corrected(s, eq3_sign) for s in studies]
    return [lrr(s) for s in studies]


def cmd_analyze(args: argparse.Namespace) -> int:
    studies = read_studies_csv(args.input)
    if not studies:
        raise ParseError(f"{args.input}: no studies found")
    for s in studies:
        validate_study(s)
    level = args.level
    rows = _analyze_rows(studies, args.bias_correction, args.eq3_sign)
    k = len(studies)
    pipeline = "corrected" if args.bias_correction else "usual"

    out = sys.stdout
    print(f"Study effects ({pipeline} pipeline, {k} studies)", file=out)
    print(f"  {'id':<16} {'estimate':>12} {'variance':>12}  flags", file=out)
    for s, r in zip(studies, rows):
        flags = "floored" if r.variance_floored else ""
        print(
            f"  {s.id:<16} {_fmt(r.estimate):>12} {_fmt(r.variance):>12}  {flags}",
            file=out,
        )

    points = {}
    print("\nBetween-study variance", file=out)
    print(f"  {'method':<8} {'estimate':>12}  flags", file=out)
    for name, fn in (("DL", tau2_dl), ("REML", tau2_reml), ("MP", tau2_mp), ("J", tau2_j)):
        est = fn(rows)
        points[name] = est
        flags = "truncated" if est.truncated else ""
        print(f"  {name:<8} {_fmt(est.value):>12}  {flags}", file=out)

    intervals = {}
    print(f"\n  {'interval':<8} {_fmt(level * 100)}% lo {'':>4} hi", file=out)
    for name, fn in (("QP", qp_interval), ("BJ", bj_interval), ("J", j_interval), ("PL", pl_interval)):
        ci = fn(rows, level)
        intervals[name] = ci
        print(f"  {name:<8} {_fmt(ci.lo):>12} {_fmt(ci.hi):>12}", file=out)

    pooled = {}
    for name in ("DL", "REML", "MP", "J"):
        pooled[f"IV-{name}"] = ci_iv_normal(pool_iv(rows, points[name]), level)
    pooled["SSW"] = ci_ssw_t(pool_ssw(rows, studies, points["MP"]), k, level)
    lam_intervals = {
        "IV-DL": pooled["IV-DL"],
        "IV-REML": pooled["IV-REML"],
        "IV-MP": pooled["IV-MP"],
        "IV-J": pooled["IV-J"],
        "HKSJ": ci_hksj(rows, points["DL"], level),
        "HKSJ-MP": ci_hksj(rows, points["MP"], level),
        "SSW-MP": pooled["SSW"],
    }

    print("\nOverall effect", file=out)
    print(f"  {'method':<8} {'estimate':>12} {'variance':>12}", file=out)
    for name in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "SSW"):
        p = pooled[name]
        print(f"  {name:<8} {_fmt(p.estimate):>12} {_fmt(p.variance):>12}", file=out)

    print(f"\n  {'interval':<8} {'center':>12} {'lo':>12} {'hi':>12}", file=out)
    for name in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "HKSJ", "HKSJ-MP", "SSW-MP"):
        p = lam_intervals[name]
        print(
            f"  {name:<8} {_fmt(p.estimate):>12} {_fmt(p.ci_lo):>12} {_fmt(p.ci_hi):>12}",
            file=out,
        )

    if args.out:
        _write_analyze_csv(args.out, studies, rows, points, intervals, pooled, lam_intervals, level)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _write_analyze_csv(path, studies, rows, points, intervals, pooled, lam_intervals, level):
    def full(x: float | None) -> str:
        if x is None:
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("kind", "name", "estimate", "variance", "lo", "hi", "level", "flags"))
        for s, r in zip(studies, rows):
            writer.writerow(
                (
                    "study",
                    s.id,
                    full(r.estimate),
                    full(r.variance),
                    "",
                    "",
                    "",
                    "floored" if r.variance_floored else "",
                )
            )
        for name, est in points.items():
            writer.writerow(
                (
                    "tau2_point",
                    name,
                    full(est.value),
                    "",
                    "",
                    "",
                    "",
                    "truncated" if est.truncated else "",
                )
            )
        for name, ci in intervals.items():
            flags = ";".join(
                f
                for f in (
                    "lo_truncated" if ci.lo_truncated else "",
                    "hi_truncated" if ci.hi_truncated else "",
                )
                if f
            )
            writer.writerow(
                ("tau2_interval", name, "", "", full(ci.lo), full(ci.hi), full(level), flags)
            )
        for name in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "SSW"):
            p = pooled[name]
            writer.writerow(
                ("lambda_point", name, full(p.estimate), full(p.variance), "", "", "", "")
            )
        for name, p in lam_intervals.items():
            writer.writerow(
                (
                    "lambda_interval",
                    name,
                    full(p.estimate),
                    "",
                    full(p.ci_lo),
                    full(p.ci_hi),
                    full(level),
                    "",
                )
            )


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            print(
                f"warning: ignoring non-integer {THREADS_ENV}={env!r}",
                file=sys.stderr,
            )
    return os.cpu_count() or 1


def cmd_simulate(args: argparse.Namespace) -> int:
    config = simgrid.load_config(args.config)
    if args.reps is not None or args.seed is not None:
        from dataclasses import replace

        config = replace(
            config,
            reps=args.reps if args.reps is not None else config.reps,
            seed=args.seed if args.seed is not None else config.seed,
        )
    output = args.out or config.output
    if not output:
        raise SchemaError("no output path: set 'output' in the config or pass --out")
    threads = _resolve_threads(args.threads)

    def progress(res):
        sc = res.scenario
        print(
            f"cell lambda={sc.true_lrr:g} tau2={sc.tau2:g} K={sc.k} n={sc.n_total} "
            f"pipeline={sc.pipeline} done",
            file=sys.stderr,
        )

    results = simgrid.run_grid(config, threads=threads, progress=progress)
    if not results:
        print("empty grid; nothing to write", file=sys.stderr)
        return 0
    report.write_results_csv(results, output)
    print(f"wrote {output} ({len(results)} scenario results)", file=sys.stderr)
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    if args.metric is not None and args.metric not in report.METRICS:
        raise SchemaError(
            f"unknown metric {args.metric!r}; valid metrics: {', '.join(report.METRICS)}"
        )
    rows = report.read_results_rows(args.results)
    metrics = [args.metric] if args.metric else sorted({r["metric"] for r in rows})
    lambdas = (
        [args.lambda_value]
        if args.lambda_value is not None
        else sorted({r["lambda"] for r in rows})
    )
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for metric in metrics:
        for lam in lambdas:
            for pipeline in sorted({r["pipeline"] for r in rows}):
                subset = [
                    r
                    for r in rows
                    if r["metric"] == metric
                    and r["lambda"] == lam
                    and r["pipeline"] == pipeline
                ]
                if not subset:
                    continue
                name = f"{metric}_lambda-{lam:g}_{pipeline}.svg"
                path = os.path.join(args.out_dir, name)
                report.render_panel_grid(subset, metric, lam, path, pipeline=pipeline)
                written.append(path)
    if not written:
        raise SchemaError("no matching rows to plot")
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaratio",
        description=(
            "Meta-analysis of the log response ratio: analyze study summaries, "
            "run simulation grids, and render result figures."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="analyze a CSV of study summaries")
    p_analyze.add_argument("input", help="CSV with header " + ",".join(ANALYZE_HEADER))
    p_analyze.add_argument(
        "--bias-correction",
        action="store_true",
        help="use the bias-corrected study-level estimator",
    )
    p_analyze.add_argument(
        "--level", type=float, default=0.95, help="confidence level (default 0.95)"
    )
    p_analyze.add_argument(
        "--eq3-sign",
        choices=EQ3_SIGNS,
        default="as_printed",
        help="sign variant of the corrected-variance formula",
    )
    p_analyze.add_argument("--out", help="also write results to this CSV")
    p_analyze.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p_sim.add_argument("config", help="JSON configuration file")
    p_sim.add_argument(
        "--threads",
        type=int,
        help=f"worker processes (default: all cores, or {THREADS_ENV}; flag wins)",
    )
    p_sim.add_argument("--seed", type=int, help="override the config seed")
    p_sim.add_argument("--reps", type=int, help="override the config replication count")
    p_sim.add_argument("--out", help="override the config output path")
    p_sim.set_defaults(func=cmd_simulate)

    p_plot = sub.add_parser("plot", help="render panel-grid SVGs from a results CSV")
    p_plot.add_argument("results", help="results CSV produced by simulate")
    p_plot.add_argument("--metric", help="render only this metric")
    p_plot.add_argument(
        "--lambda",
        dest="lambda_value",
        type=float,
        help="render only this overall-effect value",
    )
    p_plot.add_argument("--out-dir", default=".", help="directory for SVG files")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MetaRatioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
