import math

import numpy as np
import pytest

from metaratio.distributions import (
    RngStream,
    chi2_cdf,
    chi2_quantile,
    lognormal_params_from_moments,
    norm_quantile,
    sample_lognormal_by_moments,
    sample_normal,
    t_quantile,
)
from metaratio.model import DomainError, NonPositiveMomentError

from oracles import chi2_cdf_quad, quantile_by_bisection, t_cdf_quad


class TestRngStream:
    def test_identical_key_identical_sequence(self):
        a = RngStream(123).substream(4, 7)
        b = RngStream(123).substream(4, 7)
        assert np.array_equal(
            sample_normal(0, 1, a, size=100), sample_normal(0, 1, b, size=100)
        )

    def test_different_substreams_differ(self):
        a = RngStream(123).substream(4, 7)
        b = RngStream(123).substream(4, 8)
        assert not np.array_equal(
            sample_normal(0, 1, a, size=100), sample_normal(0, 1, b, size=100)
        )

    def test_substream_independent_of_sibling_consumption(self):
        # Drawing from one stream must not perturb another: streams are
        # addressed, not sequentially split.
        root = RngStream(9)
        lone = root.substream(0)
        first = sample_normal(0, 1, lone, size=10)
        root2 = RngStream(9)
        noisy = root2.substream(1)
        sample_normal(0, 1, noisy, size=1000)
        again = sample_normal(0, 1, root2.substream(0), size=10)
        assert np.array_equal(first, again)


class TestSampleNormal:
    def test_degenerate_sigma_returns_mu_exactly(self):
        rng = RngStream(0)
        assert sample_normal(0.0, 0.0, rng) == 0.0
        assert sample_normal(2.0, 0.0, rng) == 2.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            sample_normal(0.0, -1.0, RngStream(0))

    def test_sample_mean_clt_bound(self):
        # 3 sigma / sqrt(N) band around the true mean
        rng = RngStream(2024)
        draws = sample_normal(0.5, 1.0, rng, size=1_000_000)
        assert abs(float(np.mean(draws)) - 0.5) < 0.004


class TestLognormalMoments:
    def test_unit_mean_unit_variance_closed_form(self):
        meanlog, sdlog = lognormal_params_from_moments(1.0, 1.0)
        assert sdlog**2 == pytest.approx(math.log(2), abs=1e-12)
        assert meanlog == pytest.approx(-math.log(2) / 2, abs=1e-12)

    def test_standard_lognormal_recovered(self):
        # mean = e^(1/2), variance = e(e-1) inverts to meanlog 0, sdlog 1
        meanlog, sdlog = lognormal_params_from_moments(
            math.exp(0.5), math.e * (math.e - 1.0)
        )
        assert meanlog == pytest.approx(0.0, abs=1e-12)
        assert sdlog == pytest.approx(1.0, abs=1e-12)

    def test_vanishing_variance_limit(self):
        meanlog, sdlog = lognormal_params_from_moments(3.0, 1e-12)
        assert sdlog < 1e-5
        assert meanlog == pytest.approx(math.log(3.0), abs=1e-6)

    def test_nonpositive_moments_rejected(self):
        with pytest.raises(NonPositiveMomentError):
            lognormal_params_from_moments(-1.0, 1.0)
        with pytest.raises(NonPositiveMomentError):
            lognormal_params_from_moments(1.0, 0.0)

    def test_sampler_matches_moments(self):
        rng = RngStream(77)
        draws = sample_lognormal_by_moments(1.0, 1.0, rng, size=1_000_000)
        assert np.all(draws > 0)
        assert abs(float(np.mean(draws)) - 1.0) < 0.005
        assert abs(float(np.var(draws, ddof=1)) - 1.0) < 0.05


FROZEN_QUANTILES = [
    # computed by bisection on quadrature of the hand-written densities
    ("chi2", 1, 0.95, 3.8414588206939833),
    ("chi2", 9, 0.025, 2.7003894999803517),
    ("chi2", 2, 0.975, 7.377758908227873),
    ("chi2", 2, 0.025, 0.05063561596857974),
    ("t", 4, 0.975, 2.7764451051977845),
    ("t", 1, 0.975, 12.706204736174602),
]


class TestQuantiles:
    @pytest.mark.parametrize("family,df,p,expected", FROZEN_QUANTILES)
    def test_frozen_quadrature_oracle_values(self, family, df, p, expected):
        fn = chi2_quantile if family == "chi2" else t_quantile
        assert fn(df, p) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("df", [1, 2, 5, 9, 30])
    def test_fresh_quadrature_oracle_chi2(self, df):
        for p in (0.025, 0.5, 0.975):
            oracle = quantile_by_bisection(
                lambda x: chi2_cdf_quad(x, df), p, 0.0, 20.0 * df + 20.0
            )
            assert chi2_quantile(df, p) == pytest.approx(oracle, abs=1e-8)

    def test_fresh_quadrature_oracle_t(self):
        for df in (2, 4, 10):
            oracle = quantile_by_bisection(
                lambda x: t_cdf_quad(x, df), 0.975, 0.0, 100.0
            )
            assert t_quantile(df, 0.975) == pytest.approx(oracle, abs=1e-8)

    def test_chi2_cdf_closed_form_df2(self):
        for x in (0.1, 1.0, 5.0, 20.0):
            assert chi2_cdf(2, x) == pytest.approx(1 - math.exp(-x / 2), abs=1e-12)

    def test_t_symmetry(self):
        for df in (1, 4, 25):
            assert t_quantile(df, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_t_normal_limit(self):
        assert t_quantile(10**7, 0.975) == pytest.approx(1.959964, abs=1e-4)
        assert norm_quantile(0.975) == pytest.approx(1.9599639845400523, abs=1e-10)

    @pytest.mark.parametrize("df", [1, 3, 9, 124])
    def test_quantile_cdf_mutual_inverse(self, df):
        for p in (1e-6, 0.01, 0.3, 0.7, 0.99, 1 - 1e-6):
            assert abs(chi2_cdf(df, chi2_quantile(df, p)) - p) <= 1e-10

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            chi2_quantile(0, 0.5)
        with pytest.raises(DomainError):
            chi2_quantile(2, 1.0)
        with pytest.raises(DomainError):
            t_quantile(3, 0.0)
