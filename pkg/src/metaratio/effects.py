"""Study-level log-response-ratio estimates and within-study variances.

Two pipelines: the usual delta-method estimator, and the small-sample
bias-corrected variant.  The corrected variance formula is implemented with
the minus sign exactly as published; because that sign is suspect, a toggle
selects the plus-sign variant without changing the default.
"""

from __future__ import annotations

import math

from .model import (
    DomainError,
    EffectRow,
    StudySummary,
    ZeroVarianceError,
    validate_study,
)

__all__ = ["lrr", "lrr_bias_corrected", "EQ3_SIGNS"]

EQ3_SIGNS = ("as_printed", "plus")


def _cv_terms(study: StudySummary) -> tuple[float, float, float]:
    """Return (estimate, t, c): the log ratio and the two squared-CV/n terms."""
    tr, co = study.treatment, study.control
    estimate = math.log(tr.mean / co.mean)
    t = tr.sd**2 / (tr.n * tr.mean**2)
    c = co.sd**2 / (co.n * co.mean**2)
    return estimate, t, c


def lrr(study: StudySummary) -> EffectRow:
    """Usual log-response-ratio estimate with its delta-method variance.

    estimate = ln(mean_T / mean_C)
    variance = s_T^2 / (n_T mean_T^2) + s_C^2 / (n_C mean_C^2)

    Raises ZeroVarianceError when both arm SDs are zero; such a row would get
    infinite weight downstream.
    """
    validate_study(study)
    estimate, t, c = _cv_terms(study)
    variance = t + c
    if variance == 0.0:
        raise ZeroVarianceError(
            f"study {study.id!r}: both arm SDs are zero, variance is 0"
        )
    return EffectRow(estimate=estimate, variance=variance, corrected=False)


def lrr_bias_corrected(study: StudySummary, eq3_sign: str = "as_printed") -> EffectRow:
    """Bias-corrected log-response-ratio estimate and variance.

    The point estimate adds half the difference of the squared-CV/n terms:

        estimate = ln(mean_T/mean_C) + (t - c) / 2,   t = s_T^2/(n_T mean_T^2)

    and the variance adds half the difference of their squares (t^2 - c^2)/2,
    minus sign as published.  ``eq3_sign="plus"`` switches the variance
    correction to (t^2 + c^2)/2.  When the corrected variance comes out
    nonpositive it falls back to the usual delta-method variance and the row
    is flagged ``variance_floored``.
    """
    if eq3_sign not in EQ3_SIGNS:
        raise DomainError(f"eq3_sign must be one of {EQ3_SIGNS}, got {eq3_sign!r}")
    validate_study(study)
    estimate, t, c = _cv_terms(study)
    corrected_estimate = estimate + 0.5 * (t - c)
    base_variance = t + c
    if base_variance == 0.0:
        raise ZeroVarianceError(
            f"study {study.id!r}: both arm SDs are zero, variance is 0"
        )
    if eq3_sign == "as_printed":
        variance = base_variance + 0.5 * (t * t - c * c)
    else:
        variance = base_variance + 0.5 * (t * t + c * c)
    floored = variance <= 0.0
    if floored:
        variance = base_variance
    return EffectRow(
        estimate=corrected_estimate,
        variance=variance,
        corrected=True,
        variance_floored=floored,
    )
