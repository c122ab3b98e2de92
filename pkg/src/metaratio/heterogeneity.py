"""Point estimation of the between-study variance: DL, REML, MP, and Jackson.

All estimators work on a list of EffectRow (estimate + within-study variance).
The shared machinery (Cochran's Q, the generalized Q profile, the restricted
log-likelihood) lives here because both the point estimators and the interval
estimators are built from it.

References
----------
DerSimonian & Laird (1986), Controlled Clinical Trials 7, 177-188.
Mandel & Paule (1970), interlaboratory consensus values.
DerSimonian & Kacker (2007), Contemp Clin Trials 28, 105-114.
Jackson (2013), Stat Med 32, 4141-4165 (constants a_i = 1/se_i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import (
    DegenerateWeightsError,
    EffectRow,
    NoBracketError,
    NonConvergenceError,
    Tau2Estimate,
    TooFewStudiesError,
)

__all__ = [
    "QProfile",
    "cochran_q",
    "generalized_q",
    "restricted_loglik",
    "tau2_cap",
    "tau2_dl",
    "tau2_mp",
    "tau2_reml",
    "tau2_j",
]


def effect_arrays(effects: list[EffectRow]) -> tuple[np.ndarray, np.ndarray]:
    """Extract (estimates, variances) arrays, enforcing K >= 2."""
    if len(effects) < 2:
        raise TooFewStudiesError(f"need at least 2 studies, got {len(effects)}")
    y = np.array([e.estimate for e in effects], dtype=float)
    v2 = np.array([e.variance for e in effects], dtype=float)
    return y, v2


def _weighted_q(y: np.ndarray, w: np.ndarray) -> float:
    theta = float(np.sum(w * y) / np.sum(w))
    return float(np.sum(w * (y - theta) ** 2))


def _q_at(y: np.ndarray, v2: np.ndarray, tau2: float) -> float:
    return _weighted_q(y, 1.0 / (v2 + tau2))


@dataclass(frozen=True)
class QProfile:
    """Callable view of the generalized Q statistic for a fixed set of effects.

    ``q(tau2)`` uses weights 1/(v_i^2 + tau2); ``q(0)`` is Cochran's Q.
    Strictly decreasing in tau2 whenever q(0) > 0.
    """

    estimates: tuple[float, ...]
    variances: tuple[float, ...]

    @classmethod
    def from_effects(cls, effects: list[EffectRow]) -> "QProfile":
        y, v2 = effect_arrays(effects)
        return cls(tuple(y), tuple(v2))

    def q(self, tau2: float) -> float:
        y = np.asarray(self.estimates)
        v2 = np.asarray(self.variances)
        return _q_at(y, v2, tau2)

    @property
    def k(self) -> int:
        return len(self.estimates)


def cochran_q(effects: list[EffectRow]) -> float:
    """Cochran's heterogeneity statistic with inverse-variance weights."""
    y, v2 = effect_arrays(effects)
    return _q_at(y, v2, 0.0)


def generalized_q(effects: list[EffectRow], tau2: float) -> float:
    """Q evaluated with weights 1/(v_i^2 + tau2); equals cochran_q at tau2 = 0."""
    if tau2 < 0:
        raise DegenerateWeightsError(f"tau2 must be >= 0, got {tau2}")
    y, v2 = effect_arrays(effects)
    return _q_at(y, v2, tau2)


def tau2_cap(y: np.ndarray, v2: np.ndarray) -> float:
    """Search cap for every tau2 root finding / maximization in the package."""
    spread = float(np.max(y) - np.min(y))
    return 10.0 * spread * spread + 10.0 * float(np.max(v2))


def restricted_loglik(y: np.ndarray, v2: np.ndarray, tau2: float) -> float:
    """Restricted (residual) log-likelihood of tau2, up to an additive constant.

        l_R(tau2) = -1/2 [ sum ln(v_i^2+tau2) + sum w_i (y_i - theta_w)^2
                           + ln sum w_i ],   w_i = 1/(v_i^2 + tau2)
    """
    marg = v2 + tau2
    w = 1.0 / marg
    sw = float(np.sum(w))
    theta = float(np.sum(w * y) / sw)
    quad = float(np.sum(w * (y - theta) ** 2))
    return -0.5 * (float(np.sum(np.log(marg))) + quad + np.log(sw))


def _reml_score(y: np.ndarray, v2: np.ndarray, tau2: float) -> float:
    """Derivative of the restricted log-likelihood in tau2."""
    w = 1.0 / (v2 + tau2)
    sw = float(np.sum(w))
    theta = float(np.sum(w * y) / sw)
    w2 = w * w
    return -0.5 * (
        float(np.sum(w)) - float(np.sum(w2)) / sw - float(np.sum(w2 * (y - theta) ** 2))
    )


def tau2_dl(effects: list[EffectRow]) -> Tau2Estimate:
    """DerSimonian-Laird moment estimator.

    value = max{0, (Q - (K-1)) / (S1 - S2/S1)} with S_r = sum w_i^r, w = 1/v^2.
    """
    y, v2 = effect_arrays(effects)
    k = y.size
    w = 1.0 / v2
    s1 = float(np.sum(w))
    s2 = float(np.sum(w * w))
    denom = s1 - s2 / s1
    if denom <= 0.0:
        raise DegenerateWeightsError("DL denominator S1 - S2/S1 is not positive")
    raw = (_weighted_q(y, w) - (k - 1)) / denom
    if raw < 0.0:
        return Tau2Estimate(value=0.0, method="DL", truncated=True)
    return Tau2Estimate(value=raw, method="DL")


def _bracket_decreasing(f, target: float, cap: float) -> float:
    """Find hi with f(hi) < target for a decreasing f, doubling from cap/1024."""
    hi = cap / 1024.0
    if hi <= 0.0:
        hi = 1e-8
    while f(hi) >= target:
        hi *= 2.0
        if hi > cap:
            raise NoBracketError(
                f"no upper bracket for target {target} below cap {cap}"
            )
    return hi


def tau2_mp(effects: list[EffectRow]) -> Tau2Estimate:
    """Mandel-Paule estimator: the root of Q(tau2) = K - 1.

    Q(tau2) is strictly decreasing, so the root is unique; if Q(0) <= K-1 the
    estimate is truncated at zero.
    """
    y, v2 = effect_arrays(effects)
    k = y.size
    target = float(k - 1)
    if _q_at(y, v2, 0.0) <= target:
        return Tau2Estimate(value=0.0, method="MP", truncated=True)
    cap = tau2_cap(y, v2)
    hi = _bracket_decreasing(lambda t: _q_at(y, v2, t), target, cap)
    root, info = optimize.brentq(
        lambda t: _q_at(y, v2, t) - target,
        0.0,
        hi,
        xtol=1e-13,
        rtol=8.9e-16,
        maxiter=200,
        full_output=True,
    )
    if not info.converged:
        raise NonConvergenceError("Mandel-Paule root search did not converge")
    return Tau2Estimate(value=float(root), method="MP", iterations=info.iterations)


def tau2_reml(effects: list[EffectRow]) -> Tau2Estimate:
    """Restricted-maximum-likelihood estimator.

    Maximizes the restricted log-likelihood over [0, cap] with a bounded
    derivative-free search, then polishes interior optima on the analytic
    score equation.  The zero boundary is checked explicitly.
    """
    y, v2 = effect_arrays(effects)
    cap = tau2_cap(y, v2)

    def nll(t: float) -> float:
        return -restricted_loglik(y, v2, t)

    res = optimize.minimize_scalar(
        nll, bounds=(0.0, cap), method="bounded", options={"xatol": 1e-12, "maxiter": 500}
    )
    iterations = int(res.nfev)
    x = float(res.x)

    # Boundary solution: the score at 0 is non-positive, or 0 beats the
    # interior candidate outright.
    if _reml_score(y, v2, 0.0) <= 0.0 or nll(0.0) <= nll(x):
        return Tau2Estimate(
            value=0.0, method="REML", truncated=True, iterations=iterations,
            converged=bool(res.success),
        )

    # Interior: polish on the score equation (positive at 0 by the check above,
    # negative beyond the optimum).
    hi = x
    score_hi = _reml_score(y, v2, hi)
    doublings = 0
    while score_hi > 0.0:
        hi = max(hi * 2.0, 1e-12)
        doublings += 1
        if hi > cap or doublings > 80:
            raise NonConvergenceError("REML score never changes sign below cap")
        score_hi = _reml_score(y, v2, hi)
    root, info = optimize.brentq(
        lambda t: _reml_score(y, v2, t),
        0.0,
        hi,
        xtol=1e-14,
        rtol=8.9e-16,
        maxiter=200,
        full_output=True,
    )
    if not info.converged:
        raise NonConvergenceError("REML score root polish did not converge")
    return Tau2Estimate(
        value=float(root),
        method="REML",
        iterations=iterations + info.iterations,
        converged=True,
    )


def tau2_j(effects: list[EffectRow]) -> Tau2Estimate:
    """Jackson's moment estimator with fixed constants a_i = 1/v_i.

    Generalized method of moments: with a+ = sum a_i, theta_a the a-weighted
    mean and Q_a = sum a_i (y_i - theta_a)^2,

        value = max{0, [Q_a - (sum a_i v_i^2 - sum a_i^2 v_i^2 / a+)]
                        / (a+ - sum a_i^2 / a+)}.
    """
    y, v2 = effect_arrays(effects)
    a = 1.0 / np.sqrt(v2)
    a_plus = float(np.sum(a))
    q_a = _weighted_q(y, a)
    e_term = float(np.sum(a * v2)) - float(np.sum(a * a * v2)) / a_plus
    denom = a_plus - float(np.sum(a * a)) / a_plus
    if denom <= 0.0:
        raise DegenerateWeightsError("Jackson denominator a+ - sum a^2/a+ is not positive")
    raw = (q_a - e_term) / denom
    if raw < 0.0:
        return Tau2Estimate(value=0.0, method="J", truncated=True)
    return Tau2Estimate(value=raw, method="J")
