"""Distribution of Q statistics with fixed weights.

A Q statistic built from constant weights a_i on effects with marginal
variances s_i is a quadratic form in normal variables, distributed as a
positive linear combination of independent chi-squared(1) terms.  This module
computes the combination's coefficients (eigenvalues) and its CDF, which is
the pivot behind the generalized Q-profile confidence intervals.

The CDF uses Imhof-type numerical inversion of the characteristic function:

    P(Q <= x) = 1/2 - (1/pi) * int_0^inf sin(theta(u)) / (u * rho(u)) du
    theta(u)  = (1/2) sum_j arctan(l_j u) - x u / 2
    rho(u)    = prod_j (1 + l_j^2 u^2)^(1/4)

integrated by composite Gauss-Legendre panels with doubling refinement, plus
an exact chi-squared reduction when all eigenvalues coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    DimensionMismatchError,
    DomainError,
    ToleranceNotMetError,
    TooFewStudiesError,
)
from .distributions import chi2_cdf

__all__ = ["WeightedChiSq", "q_eigenvalues", "cdf_weighted_chisq"]

_EIG_DROP_REL = 1e-12
_GL_ORDER = 16
_MAX_NODES = 1 << 21
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


@dataclass(frozen=True)
class WeightedChiSq:
    """Coefficients l_j of a sum of independent chi-squared(1) variables."""

    lambdas: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.lambdas:
            raise DomainError("weighted chi-squared needs at least one coefficient")
        if any(l <= 0 for l in self.lambdas):
            raise DomainError("all coefficients must be positive")
        if any(
            self.lambdas[i] < self.lambdas[i + 1]
            for i in range(len(self.lambdas) - 1)
        ):
            raise DomainError("coefficients must be sorted descending")

    @property
    def trace(self) -> float:
        return float(sum(self.lambdas))


def q_eigenvalues(a, marginal_vars) -> WeightedChiSq:
    """Eigenvalue coefficients of Q_a = sum a_i (y_i - ybar_a)^2.

    With A = diag(a), B = A - a a^T / a+, and Sigma = diag(marginal_vars),
    Q_a for y ~ N(theta 1, Sigma) is distributed as sum of l_j chi2(1) where
    the l_j are the K-1 positive eigenvalues of Sigma^(1/2) B Sigma^(1/2)
    (B annihilates the mean direction, so no noncentrality arises).
    """
    a = np.asarray(a, dtype=float)
    s = np.asarray(marginal_vars, dtype=float)
    if a.shape != s.shape or a.ndim != 1:
        raise DimensionMismatchError(
            f"weights and variances must be equal-length vectors, got {a.shape} vs {s.shape}"
        )
    if a.size < 2:
        raise TooFewStudiesError("need at least 2 studies for a Q statistic")
    if np.any(a <= 0) or np.any(s <= 0):
        raise DomainError("weights and marginal variances must be positive")
    b = np.diag(a) - np.outer(a, a) / float(np.sum(a))
    sqrt_s = np.sqrt(s)
    m = b * np.outer(sqrt_s, sqrt_s)
    eig = np.linalg.eigvalsh(m)
    keep = eig[eig > _EIG_DROP_REL * eig[-1]]
    return WeightedChiSq(tuple(float(v) for v in keep[::-1]))


def _truncation_point(lam: np.ndarray, x: float, eps_tail: float) -> float:
    """Starting point U beyond which the Imhof tail integral is below eps_tail.

    Two families of bounds, each through the j largest coefficients, with the
    integrand envelope h(u) = 1/(u rho(u)) <= u^(-1-j/2) prod_top-j l^(-1/2):

    (a) absolute:   (1/pi) int_U h du <= (1/pi)(2/j) U^(-j/2) prod^(-1/2),
    (b) oscillatory (integration by parts against the x u / 2 phase, with a
        safety factor): ~ (12/(pi x)) h(U), valid once the phase derivative
        is dominated by x/2.

    The final U is empirically extended by the caller, so these only have to
    land in the right region.
    """
    log_lam_cumsum = np.cumsum(np.log(lam))  # lam sorted descending
    js = np.arange(1, lam.size + 1, dtype=float)
    log_u_abs = (2.0 / js) * (
        np.log(2.0 / (js * math.pi * eps_tail)) - 0.5 * log_lam_cumsum
    )
    upper = float(np.exp(np.min(log_u_abs)))
    if x > 0:
        log_u_osc = (1.0 / (1.0 + js / 2.0)) * (
            math.log(12.0 / (math.pi * x * eps_tail)) - 0.5 * log_lam_cumsum
        )
        u_osc = float(np.exp(np.min(log_u_osc)))
        # Bound (b) needs theta'(u) ~ -x/2; check the arctan part has decayed.
        if float(np.sum(lam / (1.0 + (lam * u_osc) ** 2))) <= 0.5 * x:
            upper = min(upper, u_osc)
    return max(upper, 1e-3 / lam[0])


def _imhof_integral(lam: np.ndarray, x: float, tol: float) -> float:
    """(1/pi) * int_0^inf sin(theta(u)) / (u rho(u)) du, to absolute ``tol``."""
    budget = [_MAX_NODES]

    def segment(lo: float, hi: float, n_panels: int) -> float:
        n_panels = max(4, n_panels)
        budget[0] -= n_panels * _GL_ORDER
        if budget[0] < 0:
            raise ToleranceNotMetError("Imhof quadrature node budget exhausted")
        edges = np.linspace(lo, hi, n_panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        wq = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        lu = lam[:, None] * u[None, :]
        theta = 0.5 * np.sum(np.arctan(lu), axis=0) - 0.5 * x * u
        log_rho = 0.25 * np.sum(np.log1p(lu * lu), axis=0)
        integrand = np.sin(theta) * np.exp(-log_rho) / u
        return float(np.sum(wq * integrand)) / math.pi

    def phase_panels(lo: float, hi: float) -> int:
        # One panel per half-period resolves sin exactly under 16-point GL;
        # the arctan saturation adds at most m*pi/4 of extra phase.
        span = 0.5 * float(
            np.sum(np.arctan(lam * hi) - np.arctan(lam * lo))
        ) + 0.5 * abs(x) * (hi - lo)
        return max(8, int(math.ceil(span / math.pi)))

    upper = _truncation_point(lam, x, tol / 4.0)

    # Base segment [0, upper] with doubling refinement.
    panels = phase_panels(0.0, upper)
    value = segment(0.0, upper, panels)
    while True:
        panels *= 2
        refined = segment(0.0, upper, panels)
        if abs(refined - value) <= tol / 4.0:
            value = refined
            break
        value = refined

    # Empirical tail: extend by doubling segments until one falls below the
    # tolerance share; the remainder then contributes a geometric residue of
    # the same order.
    lo = upper
    while True:
        hi = 2.0 * lo
        ext = segment(lo, hi, phase_panels(lo, hi))
        value += ext
        if abs(ext) <= tol / 4.0:
            return value
        lo = hi


def cdf_weighted_chisq(w: WeightedChiSq, x: float, tol: float = 1e-6) -> float:
    """P(sum l_j Z_j^2 <= x) for iid standard normal Z_j, to absolute ``tol``.

    Equal coefficients reduce exactly to a scaled chi-squared CDF; otherwise
    the Imhof inversion integral is evaluated with doubling Gauss-Legendre
    panels until two successive refinements agree.

    Raises ToleranceNotMetError when the node budget is exhausted first.
    """
    if x < 0:
        raise DomainError(f"quadratic form is nonnegative, got x={x}")
    if x == 0.0:
        return 0.0
    lam = np.asarray(w.lambdas, dtype=float)
    if (lam[0] - lam[-1]) <= 1e-10 * lam[0]:
        return chi2_cdf(lam.size, x / float(np.mean(lam)))
    value = 0.5 - _imhof_integral(lam, x, tol)
    return min(1.0, max(0.0, value))
