"""Tests for E-values, Observed Covariate E-values and tipping points."""

import math

import pytest

from obsbias.evalue import (
    EffectEstimate,
    Scale,
    TipParameters,
    bias_adjusted_bound,
    evalue,
    evalue_from_ratio,
    limiting_bound,
    lin_adjust,
    observed_covariate_evalue,
    orient,
    tip_rr_ud,
    tipping_curve,
    to_risk_ratio_scale,
)
from obsbias.exceptions import DomainError, NoTippingPointError


class TestOrientation:
    """Test orient and limiting_bound."""

    def test_orient_reciprocal(self):
        """Test ratios below 1 are inverted."""
        assert orient(0.5) == 2.0

    def test_orient_fixed_point(self):
        """Test 1 and values above 1 pass through."""
        assert orient(1.0) == 1.0
        assert orient(1.11) == 1.11

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_orient_rejects_out_of_domain(self, bad):
        """Test non-positive and non-finite ratios raise."""
        with pytest.raises(DomainError, match="positive and finite"):
            orient(bad)

    def test_orient_rejects_non_numbers(self):
        """Test strings are not accepted as ratios."""
        with pytest.raises(DomainError, match="real number"):
            orient("2")

    def test_limiting_bound_harmful(self):
        """Test the lower limit is limiting when the interval lies above 1."""
        assert limiting_bound(1.11, 1.37) == 1.11

    def test_limiting_bound_protective(self):
        """Test the upper limit is limiting when the interval lies below 1."""
        assert limiting_bound(0.5, 0.8) == 0.8

    def test_limiting_bound_spanning_null(self):
        """Test the limit closest to 1 after orientation wins."""
        assert limiting_bound(0.5, 1.2) == 1.2
        assert limiting_bound(0.8, 2.0) == 0.8


class TestRiskRatioScale:
    """Test transforms onto the risk-ratio scale."""

    def test_risk_ratio_identity(self):
        """Test risk ratios pass through even for common outcomes."""
        assert to_risk_ratio_scale(2.5, Scale.RISK_RATIO, True) == 2.5

    def test_rare_outcome_identity(self):
        """Test rare-outcome OR and HR pass through."""
        assert to_risk_ratio_scale(2.5, "or") == 2.5
        assert to_risk_ratio_scale(2.5, "hr") == 2.5

    def test_common_odds_ratio_square_root(self):
        """Test common-outcome odds ratios are square-rooted."""
        assert to_risk_ratio_scale(4.0, Scale.ODDS_RATIO, True) == 2.0

    def test_common_hazard_ratio_at_null(self):
        """Test the hazard-ratio transform maps 1 to 1."""
        assert to_risk_ratio_scale(1.0, Scale.HAZARD_RATIO, True) == 1.0

    def test_common_hazard_ratio(self):
        """Test the hazard-ratio transform against a hand-evaluated value."""
        assert to_risk_ratio_scale(1.11, "hr", True) == pytest.approx(1.075, abs=1e-3)

    @pytest.mark.parametrize("scale", list(Scale))
    def test_transform_is_increasing(self, scale):
        """Test every transform is strictly increasing."""
        values = [0.2, 0.5, 0.9, 1.0, 1.1, 2.0, 5.0]
        mapped = [to_risk_ratio_scale(v, scale, True) for v in values]
        assert all(a < b for a, b in zip(mapped, mapped[1:]))

    def test_parse_aliases(self):
        """Test short aliases and full tags both parse."""
        assert Scale.parse("hr") is Scale.HAZARD_RATIO
        assert Scale.parse("OR") is Scale.ODDS_RATIO
        assert Scale.parse("RiskRatio") is Scale.RISK_RATIO

    def test_parse_unknown_scale(self):
        """Test unknown scales raise with the offending value."""
        with pytest.raises(DomainError, match="Unknown scale 'xx'"):
            Scale.parse("xx")


class TestEvalue:
    """Test point and confidence-interval E-values."""

    def test_closed_form(self):
        """Test E = rr + sqrt(rr * (rr - 1))."""
        assert evalue_from_ratio(2.0) == pytest.approx(2.0 + math.sqrt(2.0))

    def test_evalue_of_protective_ratio(self):
        """Test ratios below 1 are oriented first."""
        assert evalue_from_ratio(0.5) == evalue_from_ratio(2.0)

    def test_ci_at_null(self):
        """Test a limiting bound of exactly 1 needs no confounding."""
        values = evalue(EffectEstimate(1.24, 1.0, 1.37))
        assert values.ci == 1.0

    def test_ci_spanning_null(self):
        """Test intervals containing 1 give a CI E-value of 1."""
        assert evalue(EffectEstimate(1.1, 0.9, 1.3)).ci == 1.0

    def test_risk_ratio_bound(self):
        """Test a limiting bound of 2 gives 2 + sqrt(2)."""
        values = evalue(EffectEstimate(2.5, 2.0, 3.0))
        assert values.ci == pytest.approx(3.414213562373095)

    def test_point_and_ci(self):
        """Test the textbook risk ratio 3.9 (1.8, 8.7)."""
        values = evalue(EffectEstimate(3.9, 1.8, 8.7))
        assert values.point == pytest.approx(7.263, abs=1e-3)
        assert values.ci == pytest.approx(3.0)

    def test_common_hazard_ratio_ci(self):
        """Test the common-outcome HR 1.24 (1.11, 1.37) has CI E-value 1.36."""
        effect = EffectEstimate(1.24, 1.11, 1.37, Scale.HAZARD_RATIO, True)
        assert round(evalue(effect).ci, 2) == 1.36

    def test_protective_estimate(self):
        """Test protective effects use the upper limit."""
        values = evalue(EffectEstimate(0.4, 0.25, 0.5))
        assert values.ci == pytest.approx(evalue_from_ratio(2.0))

    def test_evalue_at_least_one(self):
        """Test E-values never fall below 1."""
        values = evalue(EffectEstimate(1.0, 0.8, 1.25))
        assert values.point == 1.0
        assert values.ci == 1.0

    def test_estimate_outside_interval(self):
        """Test an estimate outside its interval is rejected."""
        with pytest.raises(DomainError, match="lcl <= estimate <= ucl"):
            EffectEstimate(1.0, 1.2, 1.5)


class TestObservedCovariateEvalue:
    """Test the Observed Covariate E-value."""

    def test_reference_value(self):
        """Test the DNR drop on the heart catheterization example."""
        oce = observed_covariate_evalue(1.11, 1.37, 1.00, 1.23, "hr", True)
        assert oce == pytest.approx(1.358969, abs=1e-5)

    def test_unchanged_bounds(self):
        """Test identical intervals give exactly 1."""
        assert observed_covariate_evalue(1.11, 1.37, 1.11, 1.37, "hr", True) == 1.0

    def test_risk_ratio_exact(self):
        """Test a ratio of 4/3 gives 4/3 + 2/3."""
        oce = observed_covariate_evalue(2.0, 3.0, 1.5, 3.0, Scale.RISK_RATIO)
        assert oce == pytest.approx(2.0)

    def test_symmetric_in_direction(self):
        """Test moving the bound away from the null also counts."""
        closer = observed_covariate_evalue(2.0, 3.0, 1.5, 3.0)
        farther = observed_covariate_evalue(1.5, 3.0, 2.0, 3.0)
        assert closer == pytest.approx(farther)

    def test_protective_bounds_flip(self):
        """Test a full-model bound below 1 flips both bounds."""
        oce = observed_covariate_evalue(0.5, 0.8, 0.6, 0.9)
        assert oce == pytest.approx(1.5)

    def test_non_positive_bound(self):
        """Test non-positive bounds raise naming the argument."""
        with pytest.raises(DomainError, match="lb_adj"):
            observed_covariate_evalue(1.1, 1.3, 0.0, 1.2)


class TestTippingPoint:
    """Test tipping-point solvers."""

    def test_tip_rr_ud(self):
        """Test the minimum rr_ud for lb 2 and rr_eu 4."""
        assert tip_rr_ud(2.0, 4.0) == pytest.approx(3.0)

    def test_solution_tips_bound(self):
        """Test the solution makes the adjusted bound exactly 1."""
        rr_ud = tip_rr_ud(2.0, 4.0)
        assert bias_adjusted_bound(2.0, 4.0, rr_ud) == pytest.approx(1.0)

    def test_evalue_is_fixed_point(self):
        """Test rr_eu equal to the E-value needs the same rr_ud."""
        e = evalue_from_ratio(2.0)
        assert tip_rr_ud(2.0, e) == pytest.approx(e)

    def test_fixed_point_across_bounds(self):
        """Test the E-value fixed point and the tipped bound over a grid of bounds."""
        for i in range(50):
            lb = 1.01 + i * (10.0 - 1.01) / 49
            e = evalue_from_ratio(lb)
            rr_ud = tip_rr_ud(lb, e)
            assert rr_ud == pytest.approx(e, rel=1e-9)
            assert bias_adjusted_bound(lb, e, rr_ud) == pytest.approx(1.0, abs=1e-12)

    def test_bound_at_null(self):
        """Test a bound of 1 needs no confounding."""
        assert tip_rr_ud(1.0, 3.0) == 1.0

    def test_bound_near_null(self):
        """Test the solution tends to 1 as the bound tends to 1."""
        assert tip_rr_ud(1.0 + 1e-9, 3.0) == pytest.approx(1.0, abs=1e-6)

    def test_no_tipping_point(self):
        """Test rr_eu at or below the bound has no finite solution."""
        with pytest.raises(NoTippingPointError, match="no finite tipping association"):
            tip_rr_ud(2.0, 1.5)

    def test_tipping_curve_skips_infeasible(self):
        """Test infeasible rr_eu values are skipped."""
        curve = tipping_curve(2.0, [1.5, 4.0, 3.0])
        assert curve == [(4.0, pytest.approx(3.0)), (3.0, pytest.approx(4.0))]


class TestLinAdjust:
    """Test the binary-confounder bound adjustment."""

    def test_balanced_confounder(self):
        """Test equal prevalences leave the bound unchanged."""
        params = TipParameters.from_prevalences(0.3, 0.3, 4.0)
        assert lin_adjust(1.5, params) == pytest.approx(1.5)

    def test_unrelated_confounder(self):
        """Test rr_ud of 1 leaves the bound unchanged."""
        params = TipParameters.from_prevalences(0.1, 0.6, 1.0)
        assert lin_adjust(1.5, params) == pytest.approx(1.5)

    def test_full_explanation(self):
        """Test a confounder present only among the exposed explains away lb 9."""
        params = TipParameters.from_prevalences(0.0, 1.0, 9.0)
        assert params.rr_eu == math.inf
        assert lin_adjust(9.0, params) == pytest.approx(1.0)

    def test_partial_adjustment(self):
        """Test a hand-computed adjustment."""
        params = TipParameters.from_prevalences(0.2, 0.6, 3.0)
        assert params.rr_eu == pytest.approx(3.0)
        assert lin_adjust(2.0, params) == pytest.approx(2.0 * 1.4 / 2.2)

    def test_prevalence_order(self):
        """Test p1 below p0 is rejected."""
        with pytest.raises(DomainError, match="must be at least p0"):
            TipParameters.from_prevalences(0.6, 0.2, 2.0)

    def test_prevalence_range(self):
        """Test prevalences outside [0, 1] are rejected."""
        with pytest.raises(DomainError, match="p1 must lie in"):
            TipParameters(rr_eu=2.0, rr_ud=2.0, p0=0.1, p1=1.5)

    def test_strengths_at_least_one(self):
        """Test association strengths below 1 are rejected."""
        with pytest.raises(DomainError, match="must be >= 1"):
            TipParameters(rr_eu=0.5, rr_ud=2.0)
