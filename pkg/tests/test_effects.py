import itertools
import math

import pytest

from metaratio.effects import lrr, lrr_bias_corrected
from metaratio.model import (
    ArmSummary,
    NonPositiveMeanError,
    StudySummary,
    ZeroVarianceError,
)


def study(nt, mt, st, nc, mc, sc, id="s"):
    return StudySummary(
        id=id, treatment=ArmSummary(nt, mt, st), control=ArmSummary(nc, mc, sc)
    )


def swap_arms(s):
    return StudySummary(id=s.id, treatment=s.control, control=s.treatment)


class TestUsualPipeline:
    def test_identical_arms_give_zero_estimate(self):
        row = lrr(study(10, 2.0, 0.5, 10, 2.0, 0.5))
        assert row.estimate == 0.0
        assert not row.corrected

    def test_hand_computed_example(self):
        row = lrr(study(10, 2.0, 0.5, 10, 1.0, 0.5))
        assert row.estimate == pytest.approx(math.log(2), abs=1e-9)
        # 0.25/(10*4) + 0.25/(10*1)
        assert row.variance == pytest.approx(0.03125, abs=1e-12)

    def test_scale_invariance_of_ratio(self):
        base = lrr(study(10, 2.0, 0.5, 10, 1.0, 0.25))
        scaled = lrr(study(10, 4.0, 1.0, 10, 2.0, 0.5))
        assert scaled.estimate == pytest.approx(base.estimate, abs=1e-12)
        assert scaled.variance == pytest.approx(base.variance, abs=1e-12)

    def test_negative_mean_raises(self):
        with pytest.raises(NonPositiveMeanError):
            lrr(study(10, 2.0, 0.5, 10, -1.0, 0.5))

    def test_zero_variance_raises(self):
        with pytest.raises(ZeroVarianceError):
            lrr(study(10, 2.0, 0.0, 10, 1.0, 0.0))

    def test_variance_positive_when_any_sd_positive(self):
        assert lrr(study(10, 2.0, 0.0, 10, 1.0, 0.3)).variance > 0


class TestCorrectedPipeline:
    def test_symmetric_arms_match_usual(self):
        s = study(10, 2.0, 0.5, 10, 2.0, 0.5)
        usual = lrr(s)
        corrected = lrr_bias_corrected(s)
        assert corrected.estimate == pytest.approx(usual.estimate, abs=1e-15)
        assert corrected.variance == pytest.approx(usual.variance, abs=1e-15)
        assert corrected.corrected and not corrected.variance_floored

    def test_hand_computed_example(self):
        # t = 0.25/40 = 0.00625, c = 0.25/10 = 0.025
        row = lrr_bias_corrected(study(10, 2.0, 0.5, 10, 1.0, 0.5))
        assert row.estimate == pytest.approx(
            math.log(2) + 0.5 * (0.00625 - 0.025), abs=1e-12
        )
        # v2 + (t^2 - c^2)/2 with t^2 = s^4/(n^2 m^4) = 0.0625/1600, c^2 = 0.0625/100
        expected = 0.03125 + 0.5 * (0.0625 / 1600 - 0.0625 / 100)
        assert expected == pytest.approx(0.03095703125, abs=1e-12)
        assert row.variance == pytest.approx(expected, abs=1e-12)
        assert not row.variance_floored

    def test_plus_sign_variant(self):
        row = lrr_bias_corrected(study(10, 2.0, 0.5, 10, 1.0, 0.5), eq3_sign="plus")
        expected = 0.03125 + 0.5 * (0.0625 / 1600 + 0.0625 / 100)
        assert row.variance == pytest.approx(expected, abs=1e-12)
        # the point estimate is unaffected by the sign toggle
        assert row.estimate == pytest.approx(
            math.log(2) + 0.5 * (0.00625 - 0.025), abs=1e-12
        )

    def test_floor_found_by_brute_force_search(self):
        # Sweep small-n inputs until the printed-sign variance goes
        # nonpositive; the row must then fall back to the usual variance.
        floored = []
        for mc, sc in itertools.product((0.05, 0.1, 0.3), (0.2, 0.5, 1.0)):
            s = study(2, 1.0, 0.05, 2, mc, sc, id=f"{mc}-{sc}")
            usual = lrr(s)
            row = lrr_bias_corrected(s)
            t = 0.05**2 / (2 * 1.0**2)
            c = sc**2 / (2 * mc**2)
            raw = usual.variance + 0.5 * (t * t - c * c)
            if raw <= 0:
                floored.append(s.id)
                assert row.variance_floored
                assert row.variance == pytest.approx(usual.variance, abs=1e-15)
            else:
                assert not row.variance_floored
        assert floored, "search never produced a nonpositive corrected variance"

    def test_swap_antisymmetry(self):
        s = study(7, 2.3, 0.8, 12, 1.1, 0.4)
        for fn in (lrr, lrr_bias_corrected):
            row = fn(s)
            swapped = fn(swap_arms(s))
            assert swapped.estimate == pytest.approx(-row.estimate, abs=1e-12)

    def test_pipelines_converge_for_large_n(self):
        # fixed moments, growing n: the correction term shrinks like 1/n
        gap_small = abs(
            lrr_bias_corrected(study(1000, 2.0, 0.5, 1000, 1.0, 0.7)).estimate
            - lrr(study(1000, 2.0, 0.5, 1000, 1.0, 0.7)).estimate
        )
        gap_large = abs(
            lrr_bias_corrected(study(100_000, 2.0, 0.5, 100_000, 1.0, 0.7)).estimate
            - lrr(study(100_000, 2.0, 0.5, 100_000, 1.0, 0.7)).estimate
        )
        assert gap_large < gap_small / 50
        assert gap_large < 1e-5
