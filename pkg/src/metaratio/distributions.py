"""Random sampling and distribution functions used by the rest of the package.

Sampling runs on counter-based Philox streams addressed by a 64-bit seed plus
a tuple of stream indices, so any partition of the work into chunks or threads
reproduces the same draws.  Quantiles and CDFs are thin wrappers over scipy's
special-function implementations with the accuracy contracts pinned by tests.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .model import DomainError, NonPositiveMomentError

__all__ = [
    "RngStream",
    "sample_normal",
    "lognormal_params_from_moments",
    "sample_lognormal_by_moments",
    "chi2_cdf",
    "chi2_quantile",
    "t_quantile",
    "norm_quantile",
]


class RngStream:
    """A deterministic, splittable random stream.

    Identified by ``(seed, stream)``: the same pair always yields the same
    sample sequence, independent of how many other streams exist or on which
    thread they run.  ``substream`` derives child streams by extending the
    index tuple; parent and children are statistically independent.

    The underlying generator is created lazily and advances as samples are
    drawn; a stream object must not be shared between threads.
    """

    __slots__ = ("seed", "stream", "algorithm", "_gen")

    def __init__(self, seed: int, stream: tuple[int, ...] = (), algorithm: str = "philox"):
        if algorithm != "philox":
            raise DomainError(f"unsupported rng algorithm {algorithm!r}")
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        self.algorithm = algorithm
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def substream(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(indices), self.algorithm)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def sample_normal(mu: float, sigma: float, rng: RngStream, size: int | None = None):
    """Draw from N(mu, sigma^2); sigma = 0 returns mu exactly (no draw consumed).

    With ``size`` set, returns an ndarray of independent draws.
    """
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return float(mu) if size is None else np.full(size, float(mu))
    if size is None:
        return float(rng.generator.normal(mu, sigma))
    return rng.generator.normal(mu, sigma, size=size)


def lognormal_params_from_moments(mean: float, variance: float) -> tuple[float, float]:
    """Convert a (mean, variance) pair to lognormal (meanlog, sdlog) parameters.

    Inverts the lognormal moment identities:
    sdlog^2 = ln(1 + variance/mean^2) and meanlog = ln(mean) - sdlog^2/2.
    """
    if mean <= 0 or variance <= 0:
        raise NonPositiveMomentError(
            f"lognormal moments must be positive, got mean={mean}, variance={variance}"
        )
    sdlog2 = math.log1p(variance / (mean * mean))
    meanlog = math.log(mean) - 0.5 * sdlog2
    return meanlog, math.sqrt(sdlog2)


def sample_lognormal_by_moments(
    mean: float, variance: float, rng: RngStream, size: int | None = None
):
    """Draw from the lognormal distribution with the given mean and variance."""
    meanlog, sdlog = lognormal_params_from_moments(mean, variance)
    draw = sample_normal(meanlog, sdlog, rng, size=size)
    return math.exp(draw) if size is None else np.exp(draw)


def _check_df(df: float) -> None:
    if not (df > 0 and math.isfinite(df)):
        raise DomainError(f"degrees of freedom must be positive, got {df}")


def _check_p(p: float) -> None:
    if not (0.0 < p < 1.0):
        raise DomainError(f"probability must lie in (0, 1), got {p}")


def chi2_cdf(df: float, x: float) -> float:
    """Chi-squared CDF with ``df`` degrees of freedom."""
    _check_df(df)
    if x <= 0:
        return 0.0
    return float(stats.chi2.cdf(x, df))


def chi2_quantile(df: float, p: float) -> float:
    """Chi-squared quantile; inverse of :func:`chi2_cdf` to 1e-10."""
    _check_df(df)
    _check_p(p)
    return float(stats.chi2.ppf(p, df))


def t_quantile(df: float, p: float) -> float:
    """Student-t quantile with ``df`` degrees of freedom, accurate to 1e-10."""
    _check_df(df)
    _check_p(p)
    return float(stats.t.ppf(p, df))


def norm_quantile(p: float) -> float:
    """Standard normal quantile."""
    _check_p(p)
    return float(stats.norm.ppf(p))
