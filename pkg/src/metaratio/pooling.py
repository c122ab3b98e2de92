"""Overall-effect estimation: inverse-variance and sample-size weighting,
with normal, HKSJ, and t-based confidence intervals.

Point estimators are weighted means, so every estimate is a convex
combination of the study effects.  Interval constructors return a copy of the
pooled result with the ci fields attached; the ci_method labels are
IV-<tau2 method>, HKSJ, HKSJ-MP, and SSW-MP.
"""

from __future__ import annotations

import math

import numpy as np

from .distributions import norm_quantile, t_quantile
from .heterogeneity import effect_arrays
from .model import (
    DomainError,
    EffectRow,
    PooledResult,
    StudySummary,
    Tau2Estimate,
    TooFewStudiesError,
)

__all__ = [
    "pool_iv",
    "pool_ssw",
    "effective_sizes",
    "ci_iv_normal",
    "ci_hksj",
    "ci_ssw_t",
]


def pool_iv(effects: list[EffectRow], tau2: Tau2Estimate) -> PooledResult:
    """Inverse-variance weighted mean with weights 1/(v_i^2 + tau2).

    The variance is the conventional 1/sum(w); a single study is allowed and
    reduces to (estimate, v^2 + tau2).
    """
    if len(effects) < 1:
        raise TooFewStudiesError("need at least 1 study to pool")
    y = np.array([e.estimate for e in effects], dtype=float)
    v2 = np.array([e.variance for e in effects], dtype=float)
    w = 1.0 / (v2 + tau2.value)
    sw = float(np.sum(w))
    estimate = float(np.sum(w * y) / sw)
    return PooledResult(
        estimate=estimate,
        variance=1.0 / sw,
        weights=tuple(float(x) for x in w / sw),
        tau2_used=tau2,
    )


def effective_sizes(studies: list[StudySummary]) -> np.ndarray:
    """Per-study effective sizes n_T n_C / (n_T + n_C)."""
    return np.array(
        [s.treatment.n * s.control.n / (s.treatment.n + s.control.n) for s in studies],
        dtype=float,
    )


def pool_ssw(
    effects: list[EffectRow],
    studies: list[StudySummary],
    tau2_mp: Tau2Estimate,
) -> PooledResult:
    """Sample-size weighted mean with weights proportional to effective sizes.

    The variance estimate is sum(n_i^2 (v_i^2 + tau2)) / (sum n_i)^2 with the
    Mandel-Paule tau2; the weights involve no estimated variances at all.
    """
    if len(effects) < 1:
        raise TooFewStudiesError("need at least 1 study to pool")
    if len(effects) != len(studies):
        raise DomainError(
            f"effects ({len(effects)}) and studies ({len(studies)}) must align"
        )
    y = np.array([e.estimate for e in effects], dtype=float)
    v2 = np.array([e.variance for e in effects], dtype=float)
    n_eff = effective_sizes(studies)
    total = float(np.sum(n_eff))
    estimate = float(np.sum(n_eff * y) / total)
    variance = float(np.sum(n_eff**2 * (v2 + tau2_mp.value))) / total**2
    return PooledResult(
        estimate=estimate,
        variance=variance,
        weights=tuple(float(x) for x in n_eff / total),
        tau2_used=tau2_mp,
    )


def ci_iv_normal(pooled: PooledResult, level: float = 0.95) -> PooledResult:
    """Normal-quantile interval around an inverse-variance pooled estimate."""
    z = norm_quantile(1.0 - (1.0 - level) / 2.0)
    half = z * math.sqrt(pooled.variance)
    return pooled.with_interval(
        pooled.estimate - half,
        pooled.estimate + half,
        f"IV-{pooled.tau2_used.method}",
    )


def _hksj_label(tau2: Tau2Estimate) -> str:
    if tau2.method == "DL":
        return "HKSJ"
    if tau2.method == "MP":
        return "HKSJ-MP"
    return f"HKSJ-{tau2.method}"


def ci_hksj(
    effects: list[EffectRow], tau2: Tau2Estimate, level: float = 0.95
) -> PooledResult:
    """Hartung-Knapp-Sidik-Jonkman interval.

    Centered on the inverse-variance mean for the given tau2, with the
    weighted residual variance

        q = sum w_i (y_i - theta)^2 / ((K-1) sum w_i)

    and t(K-1) critical values.  The q estimate is scale-free in the weights,
    and no truncation against 1/sum(w) is applied.
    """
    y, v2 = effect_arrays(effects)
    k = y.size
    w = 1.0 / (v2 + tau2.value)
    sw = float(np.sum(w))
    theta = float(np.sum(w * y) / sw)
    q_hat = float(np.sum(w * (y - theta) ** 2)) / ((k - 1) * sw)
    half = t_quantile(k - 1, 1.0 - (1.0 - level) / 2.0) * math.sqrt(q_hat)
    return PooledResult(
        estimate=theta,
        variance=q_hat,
        weights=tuple(float(x) for x in w / sw),
        tau2_used=tau2,
        ci_lo=theta - half,
        ci_hi=theta + half,
        ci_method=_hksj_label(tau2),
    )


def ci_ssw_t(pooled_ssw: PooledResult, k: int, level: float = 0.95) -> PooledResult:
    """t(K-1) interval around the sample-size weighted estimate."""
    if k < 2:
        raise TooFewStudiesError("t interval needs at least 2 studies")
    half = t_quantile(k - 1, 1.0 - (1.0 - level) / 2.0) * math.sqrt(pooled_ssw.variance)
    return pooled_ssw.with_interval(
        pooled_ssw.estimate - half,
        pooled_ssw.estimate + half,
        "SSW-MP",
    )
