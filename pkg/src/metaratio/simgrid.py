"""Lognormal data generation and the replication/aggregation engine.

Data generation: study effects are drawn around the scenario's true log
response ratio, arm observations come from lognormal distributions matched to
the scenario's arm moments, and each study is summarized by its sample means
and SDs (divisor n-1).

Determinism: every replication owns a Philox stream addressed by
(seed, scenario key, replication index), and aggregation walks the records in
replication order, so results are byte-identical for any chunking of the work
and any number of worker processes.  The scenario key hashes the data-
generating parameters only; the pipeline flag is excluded, which makes the
usual and bias-corrected pipelines see identical samples.
"""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable

import numpy as np

from .distributions import RngStream, lognormal_params_from_moments, sample_normal
from .effects import EQ3_SIGNS, lrr, lrr_bias_corrected
from .heterogeneity import tau2_dl, tau2_j, tau2_mp, tau2_reml
from .model import (
    ArmSummary,
    ConfigError,
    MetaRatioError,
    NoBracketError,
    NonConvergenceError,
    PIPELINES,
    Scenario,
    ScenarioResult,
    StudySummary,
    Tau2Estimate,
    ToleranceNotMetError,
    TAU2_INTERVAL_METHODS,
    TAU2_POINT_METHODS,
)
from .pooling import ci_hksj, ci_iv_normal, ci_ssw_t, pool_iv, pool_ssw
from .tau_intervals import bj_interval, j_interval, pl_interval, qp_interval

__all__ = [
    "BATTERIES",
    "DESK_GRID",
    "PAPER_GRID",
    "GridConfig",
    "MethodFailure",
    "ReplicationRecord",
    "generate_meta_sample",
    "grid_scenarios",
    "load_config",
    "run_grid",
    "run_replication",
    "run_scenario",
]

BATTERIES = ("full", "tau2", "tau2-points", "lambda")

DESK_GRID: dict[str, tuple] = {
    "lambdas": (0.0, 1.0),
    "tau2s": (0.0, 0.5, 1.0),
    "ks": (5, 30),
    "ns": (4, 40, 1000),
}

PAPER_GRID: dict[str, tuple] = {
    "lambdas": (0.0, 0.2, 0.5, 1.0, 2.0),
    "tau2s": tuple(round(i / 10, 1) for i in range(11)),
    "ks": (5, 10, 30, 50, 100, 125),
    "ns": (4, 10, 20, 40, 100, 250, 640, 1000),
}


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------


def scenario_stream_key(scenario: Scenario) -> int:
    """Stable 32-bit stream index for a scenario's data-generating parameters.

    Excludes the pipeline flag so both pipelines share samples.
    """
    text = "|".join(
        repr(v)
        for v in (
            scenario.true_lrr,
            scenario.tau2,
            scenario.k,
            scenario.n_total,
            scenario.mu_control,
            scenario.sigma2_t,
            scenario.sigma2_c,
        )
    )
    return zlib.crc32(text.encode("ascii"))


def generate_meta_sample(scenario: Scenario, rng: RngStream) -> list[StudySummary]:
    """Generate one meta-analysis sample of K two-arm studies.

    Study effects lambda_i ~ N(true_lrr, tau2) set the treatment means
    mu_iT = exp(lambda_i) * mu_C; each arm then contributes n_total/2
    lognormal observations matched to (mu_ij, sigma2_j), summarized by the
    sample mean and the n-1 sample SD.  Lognormal arms guarantee positive
    means, so every generated study is valid.
    """
    k = scenario.k
    n_half = scenario.n_total // 2
    lambdas = np.atleast_1d(
        sample_normal(scenario.true_lrr, math.sqrt(scenario.tau2), rng, size=k)
    )
    mu_t = np.exp(lambdas) * scenario.mu_control
    params_t = [lognormal_params_from_moments(float(m), scenario.sigma2_t) for m in mu_t]
    meanlog_t = np.array([p[0] for p in params_t])
    sdlog_t = np.array([p[1] for p in params_t])
    meanlog_c, sdlog_c = lognormal_params_from_moments(
        scenario.mu_control, scenario.sigma2_c
    )
    gen = rng.generator
    obs_t = np.exp(meanlog_t[:, None] + sdlog_t[:, None] * gen.standard_normal((k, n_half)))
    obs_c = np.exp(meanlog_c + sdlog_c * gen.standard_normal((k, n_half)))
    mean_t = obs_t.mean(axis=1)
    mean_c = obs_c.mean(axis=1)
    sd_t = obs_t.std(axis=1, ddof=1)
    sd_c = obs_c.std(axis=1, ddof=1)
    return [
        StudySummary(
            id=f"study-{i + 1}",
            treatment=ArmSummary(n=n_half, mean=float(mean_t[i]), sd=float(sd_t[i])),
            control=ArmSummary(n=n_half, mean=float(mean_c[i]), sd=float(sd_c[i])),
        )
        for i in range(k)
    ]


# ---------------------------------------------------------------------------
# Per-replication estimator battery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodFailure:
    """Marker for a method that failed on one replication.

    kind: "tolerance" (counts as non-covering), or "nonconvergence"/"error"
    (excluded from tallies, reported in failure counts).
    """

    kind: str
    message: str


def _classify(exc: MetaRatioError) -> MethodFailure:
    if isinstance(exc, ToleranceNotMetError):
        kind = "tolerance"
    elif isinstance(exc, (NonConvergenceError, NoBracketError)):
        kind = "nonconvergence"
    else:
        kind = "error"
    return MethodFailure(kind=kind, message=str(exc))


@dataclass
class ReplicationRecord:
    """Every estimate produced on one generated sample.

    Maps are keyed (pipeline, method); each battery entry is either the
    estimator's result or a MethodFailure, never missing.  A full record
    carries 8 tau2 points, 8 tau2 intervals, 10 pooled effects, and 14 effect
    intervals (each family twice, once per pipeline).
    """

    tau2_points: dict = field(default_factory=dict)
    tau2_intervals: dict = field(default_factory=dict)
    lambda_points: dict = field(default_factory=dict)
    lambda_intervals: dict = field(default_factory=dict)
    floored: dict = field(default_factory=dict)


_TAU2_FNS = (("DL", tau2_dl), ("REML", tau2_reml), ("MP", tau2_mp), ("J", tau2_j))
_TAU2_CI_FNS = (("QP", qp_interval), ("BJ", bj_interval), ("J", j_interval), ("PL", pl_interval))


def _estimate_battery(
    studies: list[StudySummary],
    pipelines: Iterable[str],
    battery: str,
    eq3_sign: str,
    level: float = 0.95,
) -> ReplicationRecord:
    rec = ReplicationRecord()
    want_tau2_ci = battery in ("full", "tau2")
    want_lambda = battery in ("full", "lambda")
    k = len(studies)

    for pipe in pipelines:
        try:
            if pipe == "usual":
                rows = [lrr(s) for s in studies]
            else:
                rows = [lrr_bias_corrected(s, eq3_sign) for s in studies]
        except MetaRatioError as exc:
            fail = _classify(exc)
            for m in TAU2_POINT_METHODS:
                rec.tau2_points[(pipe, m)] = fail
            if want_tau2_ci:
                for m in TAU2_INTERVAL_METHODS:
                    rec.tau2_intervals[(pipe, m)] = fail
            if want_lambda:
                for m in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "SSW"):
                    rec.lambda_points[(pipe, m)] = fail
                for m in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "HKSJ", "HKSJ-MP", "SSW-MP"):
                    rec.lambda_intervals[(pipe, m)] = fail
            rec.floored[pipe] = 0
            continue

        rec.floored[pipe] = sum(1 for r in rows if r.variance_floored)

        tau2: dict[str, Tau2Estimate | MethodFailure] = {}
        for name, fn in _TAU2_FNS:
            try:
                tau2[name] = fn(rows)
            except MetaRatioError as exc:
                tau2[name] = _classify(exc)
            rec.tau2_points[(pipe, name)] = tau2[name]

        if want_tau2_ci:
            for name, fn in _TAU2_CI_FNS:
                try:
                    rec.tau2_intervals[(pipe, name)] = fn(rows, level)
                except MetaRatioError as exc:
                    rec.tau2_intervals[(pipe, name)] = _classify(exc)

        if want_lambda:
            for name in TAU2_POINT_METHODS:
                label = f"IV-{name}"
                est = tau2[name]
                if isinstance(est, MethodFailure):
                    rec.lambda_points[(pipe, label)] = est
                    rec.lambda_intervals[(pipe, label)] = est
                    continue
                try:
                    pooled = pool_iv(rows, est)
                    rec.lambda_points[(pipe, label)] = pooled
                    rec.lambda_intervals[(pipe, label)] = ci_iv_normal(pooled, level)
                except MetaRatioError as exc:
                    fail = _classify(exc)
                    rec.lambda_points[(pipe, label)] = fail
                    rec.lambda_intervals[(pipe, label)] = fail

            for label, tau2_key in (("HKSJ", "DL"), ("HKSJ-MP", "MP")):
                est = tau2[tau2_key]
                if isinstance(est, MethodFailure):
                    rec.lambda_intervals[(pipe, label)] = est
                    continue
                try:
                    rec.lambda_intervals[(pipe, label)] = ci_hksj(rows, est, level)
                except MetaRatioError as exc:
                    rec.lambda_intervals[(pipe, label)] = _classify(exc)

            mp = tau2["MP"]
            if isinstance(mp, MethodFailure):
                rec.lambda_points[(pipe, "SSW")] = mp
                rec.lambda_intervals[(pipe, "SSW-MP")] = mp
            else:
                try:
                    pooled_ssw = pool_ssw(rows, studies, mp)
                    rec.lambda_points[(pipe, "SSW")] = pooled_ssw
                    rec.lambda_intervals[(pipe, "SSW-MP")] = ci_ssw_t(pooled_ssw, k, level)
                except MetaRatioError as exc:
                    fail = _classify(exc)
                    rec.lambda_points[(pipe, "SSW")] = fail
                    rec.lambda_intervals[(pipe, "SSW-MP")] = fail

    return rec


def run_replication(
    scenario: Scenario, rng: RngStream, eq3_sign: str = "as_printed"
) -> ReplicationRecord:
    """Generate one sample and run the complete estimator battery on it,
    both pipelines, recording per-method failures instead of aborting."""
    studies = generate_meta_sample(scenario, rng)
    return _estimate_battery(studies, PIPELINES, "full", eq3_sign)


# ---------------------------------------------------------------------------
# Scenario-level aggregation
# ---------------------------------------------------------------------------


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(np.mean(arr))
    if arr.size < 2:
        return mean, float("nan")
    return mean, float(np.std(arr, ddof=1) / math.sqrt(arr.size))


def _aggregate_points(
    records: list[ReplicationRecord],
    getter: Callable[[ReplicationRecord], object],
    value_of: Callable[[object], float],
    true_value: float,
) -> tuple[float, float, int, int] | None:
    """Return (bias, mc_se, n_failures, n_truncated) or None if all failed."""
    values: list[float] = []
    truncated = 0
    failures = 0
    for rec in records:
        item = getter(rec)
        if isinstance(item, MethodFailure):
            failures += 1
            continue
        values.append(value_of(item))
        if isinstance(item, Tau2Estimate) and item.truncated:
            truncated += 1
    if not values:
        return None
    mean, se = _mean_se(values)
    return mean - true_value, se, failures, truncated


def _aggregate_coverage(
    records: list[ReplicationRecord],
    getter: Callable[[ReplicationRecord], object],
    true_value: float,
) -> tuple[float, float, int] | None:
    """Coverage with the failure policy: tolerance failures count as
    non-covering; other failures are excluded from the denominator."""
    hits = 0
    denominator = 0
    failures = 0
    for rec in records:
        item = getter(rec)
        if isinstance(item, MethodFailure):
            failures += 1
            if item.kind == "tolerance":
                denominator += 1
            continue
        denominator += 1
        hits += item.covers(true_value)
    if denominator == 0:
        return None
    p = hits / denominator
    se = math.sqrt(p * (1.0 - p) / denominator)
    return p, se, failures


def _aggregate(
    scenario: Scenario,
    reps: int,
    records: list[ReplicationRecord],
    battery: str,
) -> ScenarioResult:
    pipe = scenario.pipeline
    bias_tau2: dict[str, float] = {}
    bias_tau2_se: dict[str, float] = {}
    bias_lambda: dict[str, float] = {}
    bias_lambda_se: dict[str, float] = {}
    coverage_tau2: dict[str, float] = {}
    coverage_tau2_se: dict[str, float] = {}
    coverage_lambda: dict[str, float] = {}
    coverage_lambda_se: dict[str, float] = {}
    failures: dict[str, int] = {}
    truncated_tau2: dict[str, int] = {}

    for m in TAU2_POINT_METHODS:
        agg = _aggregate_points(
            records,
            lambda r, m=m: r.tau2_points.get((pipe, m), MethodFailure("error", "missing")),
            lambda est: est.value,
            scenario.tau2,
        )
        if agg is None:
            failures[f"bias_tau2/{m}"] = reps
            continue
        bias, se, n_fail, n_trunc = agg
        bias_tau2[m], bias_tau2_se[m] = bias, se
        truncated_tau2[m] = n_trunc
        if n_fail:
            failures[f"bias_tau2/{m}"] = n_fail

    if battery in ("full", "tau2"):
        for m in TAU2_INTERVAL_METHODS:
            agg = _aggregate_coverage(
                records,
                lambda r, m=m: r.tau2_intervals.get(
                    (pipe, m), MethodFailure("error", "missing")
                ),
                scenario.tau2,
            )
            if agg is None:
                failures[f"coverage_tau2/{m}"] = reps
                continue
            p, se, n_fail = agg
            coverage_tau2[m], coverage_tau2_se[m] = p, se
            if n_fail:
                failures[f"coverage_tau2/{m}"] = n_fail

    if battery in ("full", "lambda"):
        for m in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "SSW"):
            agg = _aggregate_points(
                records,
                lambda r, m=m: r.lambda_points.get(
                    (pipe, m), MethodFailure("error", "missing")
                ),
                lambda pooled: pooled.estimate,
                scenario.true_lrr,
            )
            if agg is None:
                failures[f"bias_lambda/{m}"] = reps
                continue
            bias, se, n_fail, _ = agg
            bias_lambda[m], bias_lambda_se[m] = bias, se
            if n_fail:
                failures[f"bias_lambda/{m}"] = n_fail

        for m in ("IV-DL", "IV-REML", "IV-MP", "IV-J", "HKSJ", "HKSJ-MP", "SSW-MP"):
            agg = _aggregate_coverage(
                records,
                lambda r, m=m: r.lambda_intervals.get(
                    (pipe, m), MethodFailure("error", "missing")
                ),
                scenario.true_lrr,
            )
            if agg is None:
                failures[f"coverage_lambda/{m}"] = reps
                continue
            p, se, n_fail = agg
            coverage_lambda[m], coverage_lambda_se[m] = p, se
            if n_fail:
                failures[f"coverage_lambda/{m}"] = n_fail

    floored = sum(r.floored.get(pipe, 0) for r in records)
    return ScenarioResult(
        scenario=scenario,
        reps=reps,
        bias_tau2=bias_tau2,
        bias_tau2_se=bias_tau2_se,
        bias_lambda=bias_lambda,
        bias_lambda_se=bias_lambda_se,
        coverage_tau2=coverage_tau2,
        coverage_tau2_se=coverage_tau2_se,
        coverage_lambda=coverage_lambda,
        coverage_lambda_se=coverage_lambda_se,
        failures=failures,
        truncated_tau2=truncated_tau2,
        floored_variances=floored,
    )


def _compute_records(
    scenario: Scenario,
    reps: int,
    seed: int,
    chunk_size: int,
    battery: str,
    eq3_sign: str,
    pipelines: tuple[str, ...],
) -> list[ReplicationRecord]:
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    key = scenario_stream_key(scenario)
    root = RngStream(seed)
    records: list[ReplicationRecord] = []
    for start in range(0, reps, chunk_size):
        for rep in range(start, min(start + chunk_size, reps)):
            rng = root.substream(key, rep)
            studies = generate_meta_sample(scenario, rng)
            records.append(_estimate_battery(studies, pipelines, battery, eq3_sign))
    return records


def run_scenario(
    scenario: Scenario,
    reps: int,
    seed: int,
    *,
    chunk_size: int = 1000,
    battery: str = "full",
    eq3_sign: str = "as_printed",
) -> ScenarioResult:
    """Run ``reps`` replications of one scenario and aggregate bias/coverage.

    The result is fully determined by (scenario, reps, seed): replication
    streams are indexed by replication number, so the chunk size has no
    effect on the output.
    """
    if battery not in BATTERIES:
        raise ConfigError(f"battery must be one of {BATTERIES}, got {battery!r}")
    records = _compute_records(
        scenario, reps, seed, chunk_size, battery, eq3_sign, (scenario.pipeline,)
    )
    return _aggregate(scenario, reps, records, battery)


# ---------------------------------------------------------------------------
# Grid configuration and execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    """Simulation grid: axes, replication count, seed, and engine options."""

    lambdas: tuple[float, ...]
    tau2s: tuple[float, ...]
    ks: tuple[int, ...]
    ns: tuple[int, ...]
    reps: int = 1000
    seed: int = 0
    pipelines: str = "usual"
    eq3_sign: str = "as_printed"
    battery: str = "full"
    chunk_size: int = 1000
    mu_control: float = 1.0
    sigma2_t: float = 1.0
    sigma2_c: float = 1.0
    output: str | None = None

    def __post_init__(self) -> None:
        if self.pipelines not in ("usual", "corrected", "both"):
            raise ConfigError(
                f"pipelines must be usual, corrected, or both, got {self.pipelines!r}"
            )
        if self.eq3_sign not in EQ3_SIGNS:
            raise ConfigError(f"eq3_sign must be one of {EQ3_SIGNS}")
        if self.battery not in BATTERIES:
            raise ConfigError(f"battery must be one of {BATTERIES}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        for name, values in (
            ("lambdas", self.lambdas),
            ("tau2s", self.tau2s),
            ("ks", self.ks),
            ("ns", self.ns),
        ):
            if not isinstance(values, tuple):
                raise ConfigError(f"{name} must be a sequence")

    @property
    def pipeline_list(self) -> tuple[str, ...]:
        if self.pipelines == "both":
            return PIPELINES
        return (self.pipelines,)


_CONFIG_KEYS = {
    "preset",
    "lambda",
    "tau2",
    "k",
    "n",
    "reps",
    "seed",
    "pipelines",
    "eq3_sign",
    "battery",
    "chunk_size",
    "mu_control",
    "sigma2_t",
    "sigma2_c",
    "output",
}


def load_config(path: str) -> GridConfig:
    """Load a grid configuration from a JSON file.

    Keys: lambda, tau2, k, n (lists of axis values), reps, seed, pipelines
    (usual | corrected | both), eq3_sign (as_printed | plus), battery,
    chunk_size, mu_control, sigma2_t, sigma2_c, output.  An optional
    "preset" of "desk" or "paper" fills the four axes; explicit keys win.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    axes: dict[str, tuple] = {}
    preset = raw.get("preset")
    if preset is not None:
        if preset == "desk":
            axes.update(DESK_GRID)
        elif preset == "paper":
            axes.update(PAPER_GRID)
        else:
            raise ConfigError(f"unknown preset {preset!r}; use desk or paper")

    def axis(key: str, target: str, cast) -> None:
        if key in raw:
            values = raw[key]
            if not isinstance(values, list):
                raise ConfigError(f"config key {key!r} must be a list")
            # an empty axis is allowed; it yields an empty grid
            axes[target] = tuple(cast(v) for v in values)

    axis("lambda", "lambdas", float)
    axis("tau2", "tau2s", float)
    axis("k", "ks", int)
    axis("n", "ns", int)
    missing = {"lambdas", "tau2s", "ks", "ns"} - set(axes)
    if missing:
        raise ConfigError(f"config is missing grid axes: {sorted(missing)}")

    try:
        return GridConfig(
            lambdas=axes["lambdas"],
            tau2s=axes["tau2s"],
            ks=axes["ks"],
            ns=axes["ns"],
            reps=int(raw.get("reps", 1000)),
            seed=int(raw.get("seed", 0)),
            pipelines=str(raw.get("pipelines", "usual")),
            eq3_sign=str(raw.get("eq3_sign", "as_printed")),
            battery=str(raw.get("battery", "full")),
            chunk_size=int(raw.get("chunk_size", 1000)),
            mu_control=float(raw.get("mu_control", 1.0)),
            sigma2_t=float(raw.get("sigma2_t", 1.0)),
            sigma2_c=float(raw.get("sigma2_c", 1.0)),
            output=raw.get("output"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def grid_scenarios(config: GridConfig) -> list[Scenario]:
    """Expand the grid axes (and pipelines) into scenarios in output order."""
    scenarios = []
    for lam, tau2, k, n in product(config.lambdas, config.tau2s, config.ks, config.ns):
        for pipe in config.pipeline_list:
            scenarios.append(
                Scenario(
                    true_lrr=lam,
                    tau2=tau2,
                    k=k,
                    n_total=n,
                    mu_control=config.mu_control,
                    sigma2_t=config.sigma2_t,
                    sigma2_c=config.sigma2_c,
                    bias_corrected=(pipe == "corrected"),
                )
            )
    return scenarios


def _run_cell(args: tuple) -> list[ScenarioResult]:
    """Worker: one parameter cell, all requested pipelines on shared records."""
    base, reps, seed, chunk_size, battery, eq3_sign, pipelines = args
    records = _compute_records(base, reps, seed, chunk_size, battery, eq3_sign, pipelines)
    results = []
    for pipe in pipelines:
        scenario = Scenario(
            true_lrr=base.true_lrr,
            tau2=base.tau2,
            k=base.k,
            n_total=base.n_total,
            mu_control=base.mu_control,
            sigma2_t=base.sigma2_t,
            sigma2_c=base.sigma2_c,
            bias_corrected=(pipe == "corrected"),
        )
        results.append(_aggregate(scenario, reps, records, battery))
    return results


def run_grid(
    config: GridConfig,
    threads: int = 1,
    progress: Callable[[ScenarioResult], None] | None = None,
) -> list[ScenarioResult]:
    """Run every cell of the grid; cells are independent work units.

    The output is identical for any ``threads`` value: each cell is fully
    deterministic and results are collected in grid order.
    """
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    cells = []
    for lam, tau2, k, n in product(config.lambdas, config.tau2s, config.ks, config.ns):
        base = Scenario(
            true_lrr=lam,
            tau2=tau2,
            k=k,
            n_total=n,
            mu_control=config.mu_control,
            sigma2_t=config.sigma2_t,
            sigma2_c=config.sigma2_c,
            bias_corrected=False,
        )
        cells.append(
            (
                base,
                config.reps,
                config.seed,
                config.chunk_size,
                config.battery,
                config.eq3_sign,
                config.pipeline_list,
            )
        )

    results: list[ScenarioResult] = []
    if threads == 1 or len(cells) <= 1:
        for cell in cells:
            for res in _run_cell(cell):
                results.append(res)
                if progress is not None:
                    progress(res)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for cell_results in pool.map(_run_cell, cells):
                for res in cell_results:
                    results.append(res)
                    if progress is not None:
                        progress(res)
    return results
