import math

import numpy as np
import pytest

from metaratio.distributions import chi2_quantile
from metaratio.heterogeneity import generalized_q, restricted_loglik, tau2_mp, tau2_reml
from metaratio.model import EffectRow
from metaratio.tau_intervals import bj_interval, j_interval, pl_interval, qp_interval

from oracles import random_effect_rows


def rows_from(y, v2):
    return [EffectRow(float(a), float(b)) for a, b in zip(y, v2)]


HOMOGENEOUS = rows_from([0.4] * 4, [0.3, 0.5, 0.2, 0.25])
EQUAL_VAR = rows_from([0.0, 2.0, 4.0], [1.0, 1.0, 1.0])

ALL_INTERVALS = (qp_interval, bj_interval, j_interval, pl_interval)


class TestQP:
    def test_homogeneous_collapses_to_zero(self):
        ci = qp_interval(HOMOGENEOUS)
        assert ci.lo == 0.0 and ci.hi == 0.0
        assert ci.lo_truncated and ci.hi_truncated

    def test_equal_variance_closed_form_endpoints(self):
        # Q(t) = 8/(1+t) against the chi2(2) quantiles
        ci = qp_interval(EQUAL_VAR)
        assert ci.lo == pytest.approx(8.0 / chi2_quantile(2, 0.975) - 1.0, rel=1e-9)
        assert ci.hi == pytest.approx(8.0 / chi2_quantile(2, 0.025) - 1.0, rel=1e-9)
        assert ci.lo == pytest.approx(0.0843401227, abs=1e-9)
        assert ci.hi == pytest.approx(156.9915608, abs=1e-6)

    def test_endpoint_residuals_random_instances(self):
        gen = np.random.default_rng(7)
        interior = 0
        for _ in range(20):
            k = int(gen.integers(3, 12))
            rows = random_effect_rows(gen, k, tau2=4.0)
            ci = qp_interval(rows)
            if not ci.lo_truncated and ci.lo > 0:
                interior += 1
                assert abs(
                    generalized_q(rows, ci.lo) - chi2_quantile(k - 1, 0.975)
                ) <= 1e-6
            if not ci.hi_truncated and ci.hi > ci.lo:
                assert abs(
                    generalized_q(rows, ci.hi) - chi2_quantile(k - 1, 0.025)
                ) <= 1e-6
        assert interior >= 5

    def test_contains_mp_when_interior(self):
        gen = np.random.default_rng(17)
        for _ in range(15):
            rows = random_effect_rows(gen, 8)
            mp = tau2_mp(rows)
            ci = qp_interval(rows)
            if mp.value > 0:
                assert ci.lo <= mp.value <= ci.hi


class TestBJandJ:
    def test_equal_variances_reduce_to_qp(self):
        # equal weights + equal variances make the weighted chi-squared exact
        # chi2(K-1), so BJ and J collapse onto the Q-profile endpoints
        qp = qp_interval(EQUAL_VAR)
        for fn in (bj_interval, j_interval):
            ci = fn(EQUAL_VAR)
            assert ci.lo == pytest.approx(qp.lo, abs=1e-8)
            assert ci.hi == pytest.approx(qp.hi, abs=1e-8)

    def test_bj_equals_j_under_equal_variances(self):
        gen = np.random.default_rng(23)
        y = gen.normal(0, 1.2, 6)
        rows = rows_from(y, np.full(6, 0.6))
        a = bj_interval(rows)
        b = j_interval(rows)
        assert a.lo == pytest.approx(b.lo, abs=1e-8)
        assert a.hi == pytest.approx(b.hi, abs=1e-8)

    def test_ordering_and_truncation_flags(self):
        gen = np.random.default_rng(29)
        for _ in range(10):
            rows = random_effect_rows(gen, int(gen.integers(3, 9)))
            for fn in (bj_interval, j_interval):
                ci = fn(rows)
                assert 0.0 <= ci.lo <= ci.hi
                if ci.lo_truncated:
                    assert ci.lo == 0.0

    def test_homogeneous_collapses(self):
        for fn in (bj_interval, j_interval):
            ci = fn(HOMOGENEOUS)
            assert ci.lo == 0.0 and ci.hi == 0.0

    def test_unequal_variances_differ_from_qp(self):
        rows = rows_from([0.0, 0.8, 2.2, 3.5, 1.0], [0.1, 0.4, 1.5, 0.8, 0.05])
        qp, bj, jj = qp_interval(rows), bj_interval(rows), j_interval(rows)
        assert abs(bj.hi - qp.hi) > 1e-4
        assert abs(jj.hi - bj.hi) > 1e-4


class TestPL:
    def test_reml_zero_gives_truncated_lower(self):
        ci = pl_interval(HOMOGENEOUS)
        assert ci.lo == 0.0 and ci.lo_truncated
        assert ci.hi > 0

    def test_contains_reml_estimate(self):
        gen = np.random.default_rng(37)
        for _ in range(10):
            rows = random_effect_rows(gen, int(gen.integers(4, 10)))
            est = tau2_reml(rows)
            ci = pl_interval(rows)
            assert ci.lo <= est.value <= ci.hi

    def test_endpoint_deviance_residuals(self):
        gen = np.random.default_rng(43)
        threshold = chi2_quantile(1, 0.95)
        interior = 0
        for _ in range(15):
            rows = random_effect_rows(gen, int(gen.integers(4, 10)))
            est = tau2_reml(rows)
            ci = pl_interval(rows)
            y = np.array([r.estimate for r in rows])
            v2 = np.array([r.variance for r in rows])
            l_max = restricted_loglik(y, v2, est.value)
            for endpoint, truncated in ((ci.lo, ci.lo_truncated), (ci.hi, ci.hi_truncated)):
                if truncated or math.isinf(endpoint):
                    continue
                interior += 1
                deviance = 2.0 * (l_max - restricted_loglik(y, v2, endpoint))
                assert abs(deviance - threshold) <= 1e-6
        assert interior >= 10


class TestSharedProperties:
    def test_location_invariance(self):
        gen = np.random.default_rng(53)
        rows = random_effect_rows(gen, 7)
        shifted = [EffectRow(r.estimate + 3.0, r.variance) for r in rows]
        for fn in ALL_INTERVALS:
            a, b = fn(rows), fn(shifted)
            assert b.lo == pytest.approx(a.lo, abs=1e-8)
            if math.isinf(a.hi):
                assert math.isinf(b.hi)
            else:
                assert b.hi == pytest.approx(a.hi, abs=1e-8 + 1e-8 * a.hi)

    def test_default_level(self):
        ci = qp_interval(EQUAL_VAR)
        assert ci.level == 0.95

    def test_narrower_at_lower_level(self):
        for fn in ALL_INTERVALS:
            wide = fn(EQUAL_VAR, level=0.95)
            narrow = fn(EQUAL_VAR, level=0.90)
            assert narrow.lo >= wide.lo - 1e-12
            assert narrow.hi <= wide.hi + 1e-12
