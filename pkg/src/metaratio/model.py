"""Domain types shared across the package, plus validation and the error taxonomy.

All types are immutable value objects and safe to share between threads.
Serialization goes through ``to_dict``/``from_dict`` pairs; the only special
case is an infinite interval endpoint, written as the string ``"inf"`` so that
output files never carry a raw float infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

__all__ = [
    "ArmSummary",
    "StudySummary",
    "EffectRow",
    "Tau2Estimate",
    "Tau2Interval",
    "PooledResult",
    "Scenario",
    "ScenarioResult",
    "validate_study",
    "TAU2_POINT_METHODS",
    "TAU2_INTERVAL_METHODS",
    "LAMBDA_POINT_METHODS",
    "LAMBDA_INTERVAL_METHODS",
    "PIPELINES",
    "MetaRatioError",
    "ValidationError",
    "NonPositiveMeanError",
    "ArmTooSmallError",
    "NegativeSDError",
    "ZeroVarianceError",
    "NonPositiveMomentError",
    "DomainError",
    "TooFewStudiesError",
    "DegenerateWeightsError",
    "NoBracketError",
    "NonConvergenceError",
    "ToleranceNotMetError",
    "DimensionMismatchError",
    "ConfigError",
    "ParseError",
    "SchemaError",
    "NonRectangularGridError",
]

TAU2_POINT_METHODS = ("DL", "REML", "MP", "J")
TAU2_INTERVAL_METHODS = ("QP", "BJ", "J", "PL")
LAMBDA_POINT_METHODS = ("IV-DL", "IV-REML", "IV-MP", "IV-J", "SSW")
LAMBDA_INTERVAL_METHODS = (
    "IV-DL",
    "IV-REML",
    "IV-MP",
    "IV-J",
    "HKSJ",
    "HKSJ-MP",
    "SSW-MP",
)
PIPELINES = ("usual", "corrected")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class MetaRatioError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MetaRatioError):
    """Study-level input fails an invariant."""


class NonPositiveMeanError(ValidationError):
    """An arm mean is <= 0; the log response ratio is undefined."""


class ArmTooSmallError(ValidationError):
    """An arm has fewer than 2 subjects; no sample variance exists."""


class NegativeSDError(ValidationError):
    """An arm reports a negative standard deviation."""


class ZeroVarianceError(MetaRatioError):
    """A computed within-study variance is exactly zero (degenerate input)."""


class NonPositiveMomentError(MetaRatioError):
    """A moment parameter that must be positive is not."""


class DomainError(MetaRatioError):
    """Argument outside the mathematical domain of a distribution function."""


class TooFewStudiesError(MetaRatioError):
    """An estimator needs more studies than were supplied."""


class DegenerateWeightsError(MetaRatioError):
    """Weight configuration makes the estimator's denominator vanish."""


class NoBracketError(MetaRatioError):
    """No sign change found below the search cap; root cannot be bracketed."""


class NonConvergenceError(MetaRatioError):
    """Iterative procedure exhausted its budget without converging."""


class ToleranceNotMetError(MetaRatioError):
    """A numerical routine could not reach its accuracy contract."""


class DimensionMismatchError(MetaRatioError):
    """Paired vector arguments have different lengths."""


class ConfigError(MetaRatioError):
    """Malformed simulation configuration."""


class ParseError(MetaRatioError):
    """Malformed input file; message carries the offending line."""


class SchemaError(MetaRatioError):
    """Input file does not follow the documented column schema."""


class NonRectangularGridError(MetaRatioError):
    """Panel rendering needs a full (n, K) product and did not get one."""


# ---------------------------------------------------------------------------
# Study-level types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmSummary:
    """Summary statistics of one study arm: size, sample mean, sample SD."""

    n: int
    mean: float
    sd: float

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ArmSummary":
        return cls(n=int(d["n"]), mean=float(d["mean"]), sd=float(d["sd"]))


@dataclass(frozen=True)
class StudySummary:
    """Two-arm study summary; the unit of both real-data input and simulation."""

    id: str
    treatment: ArmSummary
    control: ArmSummary

    @property
    def n_total(self) -> int:
        return self.treatment.n + self.control.n

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "treatment": self.treatment.to_dict(),
            "control": self.control.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StudySummary":
        return cls(
            id=str(d["id"]),
            treatment=ArmSummary.from_dict(d["treatment"]),
            control=ArmSummary.from_dict(d["control"]),
        )


def validate_study(study: StudySummary) -> StudySummary:
    """Check every invariant a study must satisfy before effect computation.

    Returns the study unchanged when all invariants hold.

    Raises
    ------
    ArmTooSmallError
        An arm has n < 2, so its sample SD is undefined.
    NegativeSDError
        An arm reports sd < 0.
    NonPositiveMeanError
        An arm mean is <= 0 or non-finite; log(ratio of means) needs both
        means strictly positive.
    """
    for label, arm in (("treatment", study.treatment), ("control", study.control)):
        if arm.n < 2:
            raise ArmTooSmallError(
                f"study {study.id!r}: {label} arm has n={arm.n}, needs n >= 2"
            )
        if arm.sd < 0:
            raise NegativeSDError(
                f"study {study.id!r}: {label} arm has sd={arm.sd} < 0"
            )
        if not math.isfinite(arm.mean):
            raise NonPositiveMeanError(
                f"study {study.id!r}: {label} arm mean is not finite"
            )
        if not math.isfinite(arm.sd):
            raise NegativeSDError(
                f"study {study.id!r}: {label} arm sd is not finite"
            )
        if arm.mean <= 0:
            raise NonPositiveMeanError(
                f"study {study.id!r}: {label} arm mean {arm.mean} <= 0; "
                "log response ratio is undefined"
            )
    return study


@dataclass(frozen=True)
class EffectRow:
    """One study's log-response-ratio estimate and within-study variance."""

    estimate: float
    variance: float
    corrected: bool = False
    variance_floored: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "variance": self.variance,
            "corrected": self.corrected,
            "variance_floored": self.variance_floored,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EffectRow":
        return cls(
            estimate=float(d["estimate"]),
            variance=float(d["variance"]),
            corrected=bool(d["corrected"]),
            variance_floored=bool(d["variance_floored"]),
        )


# ---------------------------------------------------------------------------
# Estimator results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tau2Estimate:
    """Point estimate of the between-study variance.

    ``truncated`` records that the raw estimate fell below zero (or the
    defining equation held already at zero) and was clamped to the boundary.
    """

    value: float
    method: str
    truncated: bool = False
    iterations: int = 0
    converged: bool = True

    def __post_init__(self) -> None:
        if self.method not in TAU2_POINT_METHODS:
            raise DomainError(f"unknown tau2 method {self.method!r}")
        if self.value < 0:
            raise DomainError(f"tau2 estimate {self.value} < 0")
        if self.truncated and self.value != 0.0:
            raise DomainError("truncated tau2 estimate must be exactly 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "method": self.method,
            "truncated": self.truncated,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Tau2Estimate":
        return cls(
            value=float(d["value"]),
            method=str(d["method"]),
            truncated=bool(d["truncated"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
        )


def _encode_endpoint(x: float) -> float | str:
    return "inf" if math.isinf(x) else x


def _decode_endpoint(x: float | str) -> float:
    return math.inf if x == "inf" else float(x)


@dataclass(frozen=True)
class Tau2Interval:
    """Confidence interval for the between-study variance.

    ``hi`` may be ``math.inf`` in memory; serialized output writes the string
    ``"inf"`` instead, with ``hi_truncated`` flagging that the upper search
    hit its cap.
    """

    lo: float
    hi: float
    method: str
    level: float = 0.95
    lo_truncated: bool = False
    hi_truncated: bool = False

    def __post_init__(self) -> None:
        if self.method not in TAU2_INTERVAL_METHODS:
            raise DomainError(f"unknown tau2 interval method {self.method!r}")
        if not (0.0 < self.level < 1.0):
            raise DomainError(f"confidence level {self.level} outside (0, 1)")
        if self.lo < 0 or self.lo > self.hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    def covers(self, tau2: float) -> bool:
        return self.lo <= tau2 <= self.hi

    def to_dict(self) -> dict[str, Any]:
        return {
            "lo": self.lo,
            "hi": _encode_endpoint(self.hi),
            "method": self.method,
            "level": self.level,
            "lo_truncated": self.lo_truncated,
            "hi_truncated": self.hi_truncated,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Tau2Interval":
        return cls(
            lo=float(d["lo"]),
            hi=_decode_endpoint(d["hi"]),
            method=str(d["method"]),
            level=float(d["level"]),
            lo_truncated=bool(d["lo_truncated"]),
            hi_truncated=bool(d["hi_truncated"]),
        )


@dataclass(frozen=True)
class PooledResult:
    """Overall-effect estimate with its weights and, once attached, a CI.

    The point part (estimate, variance, weights, tau2 used) is produced by the
    pooling functions; interval constructors return a copy with the ci fields
    filled in.  Weights are normalized to sum to 1.
    """

    estimate: float
    variance: float
    weights: tuple[float, ...]
    tau2_used: Tau2Estimate
    ci_lo: float | None = None
    ci_hi: float | None = None
    ci_method: str | None = None

    def with_interval(self, lo: float, hi: float, method: str) -> "PooledResult":
        return replace(self, ci_lo=lo, ci_hi=hi, ci_method=method)

    def covers(self, value: float) -> bool:
        if self.ci_lo is None or self.ci_hi is None:
            raise DomainError("no confidence interval attached")
        return self.ci_lo <= value <= self.ci_hi

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "variance": self.variance,
            "weights": list(self.weights),
            "tau2_used": self.tau2_used.to_dict(),
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "ci_method": self.ci_method,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PooledResult":
        return cls(
            estimate=float(d["estimate"]),
            variance=float(d["variance"]),
            weights=tuple(float(w) for w in d["weights"]),
            tau2_used=Tau2Estimate.from_dict(d["tau2_used"]),
            ci_lo=None if d["ci_lo"] is None else float(d["ci_lo"]),
            ci_hi=None if d["ci_hi"] is None else float(d["ci_hi"]),
            ci_method=d["ci_method"],
        )


# ---------------------------------------------------------------------------
# Simulation types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation grid.

    ``true_lrr`` is the overall log response ratio the random study effects
    are centered on; arms are split equally (n_total/2 each).  The pipeline
    flag selects which study-level estimator (usual or bias-corrected) the
    reported statistics describe; data generation ignores it.
    """

    true_lrr: float
    tau2: float
    k: int
    n_total: int
    mu_control: float = 1.0
    sigma2_t: float = 1.0
    sigma2_c: float = 1.0
    bias_corrected: bool = False

    def __post_init__(self) -> None:
        # Normalize numeric types so equal parameter sets compare (and hash)
        # equal regardless of int/float spelling in configs.
        object.__setattr__(self, "true_lrr", float(self.true_lrr))
        object.__setattr__(self, "tau2", float(self.tau2))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "n_total", int(self.n_total))
        object.__setattr__(self, "mu_control", float(self.mu_control))
        object.__setattr__(self, "sigma2_t", float(self.sigma2_t))
        object.__setattr__(self, "sigma2_c", float(self.sigma2_c))
        object.__setattr__(self, "bias_corrected", bool(self.bias_corrected))
        if self.k < 2:
            raise ConfigError(f"scenario needs k >= 2 studies, got {self.k}")
        if self.n_total < 4 or self.n_total % 2 != 0:
            raise ConfigError(
                f"scenario n_total must be even and >= 4, got {self.n_total}"
            )
        if self.tau2 < 0:
            raise ConfigError(f"scenario tau2 must be >= 0, got {self.tau2}")
        if self.mu_control <= 0 or self.sigma2_t <= 0 or self.sigma2_c <= 0:
            raise ConfigError("scenario moments must be positive")

    @property
    def pipeline(self) -> str:
        return "corrected" if self.bias_corrected else "usual"

    def to_dict(self) -> dict[str, Any]:
        return {
            "true_lrr": self.true_lrr,
            "tau2": self.tau2,
            "k": self.k,
            "n_total": self.n_total,
            "mu_control": self.mu_control,
            "sigma2_t": self.sigma2_t,
            "sigma2_c": self.sigma2_c,
            "bias_corrected": self.bias_corrected,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Scenario":
        return cls(
            true_lrr=float(d["true_lrr"]),
            tau2=float(d["tau2"]),
            k=int(d["k"]),
            n_total=int(d["n_total"]),
            mu_control=float(d["mu_control"]),
            sigma2_t=float(d["sigma2_t"]),
            sigma2_c=float(d["sigma2_c"]),
            bias_corrected=bool(d["bias_corrected"]),
        )


@dataclass(frozen=True)
class ScenarioResult:
    """Aggregated bias/coverage statistics for one scenario.

    Maps are keyed by method label.  ``failures`` counts per-method failures
    keyed ``"<metric>/<method>"``; replications whose failure was a tolerance
    error still count as non-covering, while non-convergence replications are
    excluded from the tally (and reported here).
    """

    scenario: Scenario
    reps: int
    bias_tau2: dict[str, float] = field(default_factory=dict)
    bias_tau2_se: dict[str, float] = field(default_factory=dict)
    bias_lambda: dict[str, float] = field(default_factory=dict)
    bias_lambda_se: dict[str, float] = field(default_factory=dict)
    coverage_tau2: dict[str, float] = field(default_factory=dict)
    coverage_tau2_se: dict[str, float] = field(default_factory=dict)
    coverage_lambda: dict[str, float] = field(default_factory=dict)
    coverage_lambda_se: dict[str, float] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    truncated_tau2: dict[str, int] = field(default_factory=dict)
    floored_variances: int = 0

    def __post_init__(self) -> None:
        if self.reps <= 0:
            raise ConfigError(f"reps must be positive, got {self.reps}")
        for name, cov in (
            ("coverage_tau2", self.coverage_tau2),
            ("coverage_lambda", self.coverage_lambda),
        ):
            for m, p in cov.items():
                if not (0.0 <= p <= 1.0):
                    raise DomainError(f"{name}[{m}] = {p} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "reps": self.reps,
            "bias_tau2": dict(self.bias_tau2),
            "bias_tau2_se": dict(self.bias_tau2_se),
            "bias_lambda": dict(self.bias_lambda),
            "bias_lambda_se": dict(self.bias_lambda_se),
            "coverage_tau2": dict(self.coverage_tau2),
            "coverage_tau2_se": dict(self.coverage_tau2_se),
            "coverage_lambda": dict(self.coverage_lambda),
            "coverage_lambda_se": dict(self.coverage_lambda_se),
            "failures": dict(self.failures),
            "truncated_tau2": dict(self.truncated_tau2),
            "floored_variances": self.floored_variances,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioResult":
        return cls(
            scenario=Scenario.from_dict(d["scenario"]),
            reps=int(d["reps"]),
            bias_tau2={k: float(v) for k, v in d["bias_tau2"].items()},
            bias_tau2_se={k: float(v) for k, v in d["bias_tau2_se"].items()},
            bias_lambda={k: float(v) for k, v in d["bias_lambda"].items()},
            bias_lambda_se={k: float(v) for k, v in d["bias_lambda_se"].items()},
            coverage_tau2={k: float(v) for k, v in d["coverage_tau2"].items()},
            coverage_tau2_se={k: float(v) for k, v in d["coverage_tau2_se"].items()},
            coverage_lambda={k: float(v) for k, v in d["coverage_lambda"].items()},
            coverage_lambda_se={
                k: float(v) for k, v in d["coverage_lambda_se"].items()
            },
            failures={k: int(v) for k, v in d["failures"].items()},
            truncated_tau2={k: int(v) for k, v in d["truncated_tau2"].items()},
            floored_variances=int(d["floored_variances"]),
        )
