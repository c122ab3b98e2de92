"""Interval estimation of the between-study variance: QP, BJ, J, and PL.

All four are profile constructions: an interval is the set of tau2 values not
rejected by a two-sided test.  QP profiles Cochran's Q against chi-squared
quantiles; BJ and J profile a fixed-weight Q statistic against its exact
weighted-chi-squared distribution (weights 1/v_i^2 and 1/v_i respectively);
PL profiles the restricted likelihood against the chi-squared(1) deviance
threshold.

Upper endpoints that are not reached below the search cap are reported as
+infinity with the truncation flag set; coverage tallies treat such an
interval as covering everything above its lower endpoint.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import optimize

from .distributions import chi2_quantile
from .heterogeneity import (
    effect_arrays,
    restricted_loglik,
    tau2_cap,
    tau2_reml,
)
from .model import (
    EffectRow,
    NoBracketError,
    NonConvergenceError,
    Tau2Interval,
)
from .quadform import cdf_weighted_chisq, q_eigenvalues

__all__ = ["qp_interval", "bj_interval", "j_interval", "pl_interval"]

_BRENTQ_KW = dict(xtol=1e-13, rtol=8.9e-16, maxiter=200)


def _root(f: Callable[[float], float], lo: float, hi: float) -> float:
    root, info = optimize.brentq(f, lo, hi, full_output=True, **_BRENTQ_KW)
    if not info.converged:
        raise NonConvergenceError("endpoint root search did not converge")
    return float(root)


def _profile_interval(
    f: Callable[[float], float],
    f0: float,
    lo_target: float,
    hi_target: float,
    cap: float,
    method: str,
    level: float,
) -> Tau2Interval:
    """Invert a decreasing profile statistic f against two targets.

    f is nonincreasing in tau2 with f(0) = f0; the interval is
    {tau2 : hi_target <= f(tau2) <= lo_target} where lo_target > hi_target
    (the lower endpoint comes from the larger target).
    """
    if f0 <= hi_target:
        # Even tau2 = 0 sits at or below the lower test quantile: the set of
        # non-rejected values is empty; report the degenerate [0, 0].
        return Tau2Interval(
            lo=0.0, hi=0.0, method=method, level=level,
            lo_truncated=True, hi_truncated=True,
        )

    if f0 <= lo_target:
        lo, lo_trunc = 0.0, True
    else:
        hi_bracket = cap / 1024.0
        while f(hi_bracket) > lo_target:
            hi_bracket *= 2.0
            if hi_bracket > cap:
                raise NoBracketError(
                    f"{method} lower endpoint not bracketed below cap {cap}"
                )
        lo, lo_trunc = _root(lambda t: f(t) - lo_target, 0.0, hi_bracket), False

    hi_bracket = max(lo, cap / 1024.0)
    hi_trunc = False
    while f(hi_bracket) > hi_target:
        hi_bracket *= 2.0
        if hi_bracket > cap:
            return Tau2Interval(
                lo=lo, hi=math.inf, method=method, level=level,
                lo_truncated=lo_trunc, hi_truncated=True,
            )
    hi = _root(lambda t: f(t) - hi_target, lo, hi_bracket) if f(lo) > hi_target else lo
    return Tau2Interval(
        lo=lo, hi=hi, method=method, level=level,
        lo_truncated=lo_trunc, hi_truncated=hi_trunc,
    )


def qp_interval(effects: list[EffectRow], level: float = 0.95) -> Tau2Interval:
    """Q-profile interval: tau2 values whose generalized Q is not rejected
    against the chi-squared(K-1) quantiles."""
    y, v2 = effect_arrays(effects)
    k = y.size
    alpha = 1.0 - level

    def q_profile(t: float) -> float:
        w = 1.0 / (v2 + t)
        theta = float(np.sum(w * y) / np.sum(w))
        return float(np.sum(w * (y - theta) ** 2))

    return _profile_interval(
        q_profile,
        q_profile(0.0),
        chi2_quantile(k - 1, 1.0 - alpha / 2.0),
        chi2_quantile(k - 1, alpha / 2.0),
        tau2_cap(y, v2),
        "QP",
        level,
    )


def _generalized_q_interval(
    effects: list[EffectRow], a: np.ndarray, method: str, level: float
) -> Tau2Interval:
    """Shared BJ/J machinery for constants ``a``.

    The pivot F(tau2) = P(Q_a <= q_obs | tau2) under the exact weighted
    chi-squared law is monotone in tau2 (decreasing: larger tau2 inflates the
    reference distribution); the orientation is still established numerically
    before inverting, as a guard against degenerate weight patterns.
    """
    y, v2 = effect_arrays(effects)
    alpha = 1.0 - level
    a_plus = float(np.sum(a))
    theta_a = float(np.sum(a * y) / a_plus)
    q_obs = float(np.sum(a * (y - theta_a) ** 2))
    cap = tau2_cap(y, v2)

    def cdf_at(t: float) -> float:
        return cdf_weighted_chisq(q_eigenvalues(a, v2 + t), q_obs)

    f0 = cdf_at(0.0)
    f_cap = cdf_at(cap)
    if f_cap > f0:
        # Increasing orientation: invert through the complement instead.
        def f(t: float) -> float:
            return 1.0 - cdf_at(t)

        f0 = 1.0 - f0
    else:
        f = cdf_at

    return _profile_interval(
        f, f0, 1.0 - alpha / 2.0, alpha / 2.0, cap, method, level
    )


def bj_interval(effects: list[EffectRow], level: float = 0.95) -> Tau2Interval:
    """Generalized Q-profile interval with constants a_i = 1/v_i^2."""
    _, v2 = effect_arrays(effects)
    return _generalized_q_interval(effects, 1.0 / v2, "BJ", level)


def j_interval(effects: list[EffectRow], level: float = 0.95) -> Tau2Interval:
    """Generalized Q-profile interval with constants a_i = 1/v_i."""
    _, v2 = effect_arrays(effects)
    return _generalized_q_interval(effects, 1.0 / np.sqrt(v2), "J", level)


def pl_interval(effects: list[EffectRow], level: float = 0.95) -> Tau2Interval:
    """Profile-likelihood interval around the REML estimate.

    Keeps the tau2 values whose restricted-likelihood deviance against the
    REML maximum stays below the chi-squared(1) quantile at ``level``.
    """
    y, v2 = effect_arrays(effects)
    est = tau2_reml(effects)
    threshold = chi2_quantile(1, level)
    l_max = restricted_loglik(y, v2, est.value)

    def deviance(t: float) -> float:
        return 2.0 * (l_max - restricted_loglik(y, v2, t))

    cap = tau2_cap(y, v2)

    if deviance(0.0) <= threshold:
        lo, lo_trunc = 0.0, True
    else:
        lo, lo_trunc = _root(lambda t: deviance(t) - threshold, 0.0, est.value), False

    hi_bracket = max(est.value, cap / 1024.0)
    while deviance(hi_bracket) <= threshold:
        hi_bracket *= 2.0
        if hi_bracket > cap:
            return Tau2Interval(
                lo=lo, hi=math.inf, method="PL", level=level,
                lo_truncated=lo_trunc, hi_truncated=True,
            )
    hi = _root(lambda t: deviance(t) - threshold, est.value, hi_bracket)
    return Tau2Interval(
        lo=lo, hi=hi, method="PL", level=level,
        lo_truncated=lo_trunc, hi_truncated=False,
    )
