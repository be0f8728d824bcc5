"""Closed-form sensitivity analysis for unmeasured confounding.

E-values, Observed Covariate E-values and tipping-point solvers. Every
function here is pure and operates on 64-bit floats.

Example:
    >>> from obsbias.evalue import EffectEstimate, Scale, evalue
    >>> hr = EffectEstimate(1.24, 1.11, 1.37, Scale.HAZARD_RATIO, outcome_common=True)
    >>> round(evalue(hr).ci, 2)
    1.36
"""

import math
import numbers
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Tuple, Union

from obsbias.exceptions import DomainError, NoTippingPointError

_SCALE_ALIASES = {
    "rr": "RiskRatio",
    "or": "OddsRatio",
    "hr": "HazardRatio",
}


class Scale(str, Enum):
    """Ratio scale an effect is reported on."""

    RISK_RATIO = "RiskRatio"
    ODDS_RATIO = "OddsRatio"
    HAZARD_RATIO = "HazardRatio"

    @classmethod
    def parse(cls, value: Union[str, "Scale"]) -> "Scale":
        """Parse a scale from its tag or short alias (rr, or, hr).

        Raises:
            DomainError: If the value names no known scale
        """
        if isinstance(value, Scale):
            return value
        tag = _SCALE_ALIASES.get(str(value).strip().lower(), str(value).strip())
        try:
            return cls(tag)
        except ValueError:
            raise DomainError(
                f"Unknown scale '{value}'; expected one of rr, or, hr"
            ) from None


@dataclass(frozen=True)
class EffectEstimate:
    """A ratio-scale effect with its confidence interval.

    Attributes:
        estimate: Point estimate
        lcl: Lower confidence limit
        ucl: Upper confidence limit
        scale: Scale the effect is reported on
        outcome_common: Whether the outcome is common (triggers the OR/HR
                        approximations)
    """

    estimate: float
    lcl: float
    ucl: float
    scale: Scale = Scale.RISK_RATIO
    outcome_common: bool = False

    def __post_init__(self) -> None:
        for name in ("estimate", "lcl", "ucl"):
            _check_positive(getattr(self, name), name)
        if not self.lcl <= self.estimate <= self.ucl:
            raise DomainError(
                f"Expected lcl <= estimate <= ucl, got "
                f"({self.lcl}, {self.estimate}, {self.ucl})"
            )
        object.__setattr__(self, "scale", Scale.parse(self.scale))

    @property
    def limiting_bound(self) -> float:
        """The confidence limit closest to the null."""
        return limiting_bound(self.lcl, self.ucl)

    @property
    def contains_null(self) -> bool:
        return self.lcl <= 1.0 <= self.ucl


@dataclass(frozen=True)
class EValues:
    """E-values for a point estimate and its confidence interval."""

    point: float
    ci: float


@dataclass(frozen=True)
class TipParameters:
    """Sensitivity parameters of a binary unmeasured confounder.

    Attributes:
        rr_eu: Exposure-confounder association (risk ratio)
        rr_ud: Confounder-outcome association (risk ratio)
        p0: Confounder prevalence among the unexposed
        p1: Confounder prevalence among the exposed
    """

    rr_eu: float = 1.0
    rr_ud: float = 1.0
    p0: float = 0.0
    p1: float = 0.0

    def __post_init__(self) -> None:
        if not (self.rr_eu >= 1.0 and self.rr_ud >= 1.0):
            raise DomainError(
                f"rr_eu and rr_ud must be >= 1, got ({self.rr_eu}, {self.rr_ud})"
            )
        for name in ("p0", "p1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def from_prevalences(cls, p0: float, p1: float, rr_ud: float) -> "TipParameters":
        """Build parameters in the binary parameterization, rr_eu = p1 / p0.

        When p0 is 0 the exposure-confounder association is unbounded and
        rr_eu is set to infinity.

        Raises:
            DomainError: If p1 < p0 (recode the confounder so that it is more
                         prevalent among the exposed)
        """
        if p1 < p0:
            raise DomainError(
                f"p1 ({p1}) must be at least p0 ({p0}) so that rr_eu >= 1"
            )
        rr_eu = p1 / p0 if p0 > 0 else math.inf
        return cls(rr_eu=rr_eu, rr_ud=rr_ud, p0=p0, p1=p1)


def _check_positive(value: float, name: str = "value") -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return value


def orient(bound: float) -> float:
    """Orient a ratio so that it is at least 1.

    Args:
        bound: Positive ratio

    Returns:
        bound if bound >= 1, otherwise 1 / bound

    Raises:
        DomainError: If bound is non-positive or non-finite

    Example:
        >>> orient(0.5)
        2.0
    """
    bound = _check_positive(bound, "bound")
    return bound if bound >= 1.0 else 1.0 / bound


def limiting_bound(lcl: float, ucl: float) -> float:
    """Return the confidence limit closest to the null after orientation."""
    lcl = _check_positive(lcl, "lcl")
    ucl = _check_positive(ucl, "ucl")
    if lcl > 1.0:
        return lcl
    if ucl < 1.0:
        return ucl
    return lcl if orient(lcl) <= orient(ucl) else ucl


def to_risk_ratio_scale(
    value: float, scale: Union[str, Scale], outcome_common: bool = False
) -> float:
    """Transform an effect to the risk-ratio scale.

    Risk ratios and rare outcomes pass through unchanged. A common-outcome
    odds ratio is square-rooted; a common-outcome hazard ratio is mapped
    through (1 - 0.5**sqrt(hr)) / (1 - 0.5**sqrt(1/hr)).

    Raises:
        DomainError: If value is non-positive or non-finite
    """
    value = _check_positive(value)
    scale = Scale.parse(scale)
    if scale is Scale.RISK_RATIO or not outcome_common:
        return value
    if scale is Scale.ODDS_RATIO:
        return math.sqrt(value)
    if value == 1.0:
        return 1.0
    return (1.0 - 0.5 ** math.sqrt(value)) / (1.0 - 0.5 ** math.sqrt(1.0 / value))


def evalue_from_ratio(rr: float) -> float:
    """E-value of a risk ratio: rr + sqrt(rr * (rr - 1)) after orientation."""
    rr = orient(rr)
    return rr + math.sqrt(rr * (rr - 1.0))


def evalue(effect: EffectEstimate) -> EValues:
    """E-values for the point estimate and the limiting confidence bound.

    When the interval already contains 1 the CI E-value is 1.

    Example:
        >>> evalue(EffectEstimate(2.5, 2.0, 3.0)).ci
        3.414213562373095
    """
    point = evalue_from_ratio(
        to_risk_ratio_scale(effect.estimate, effect.scale, effect.outcome_common)
    )
    if effect.contains_null:
        return EValues(point=point, ci=1.0)
    bound = to_risk_ratio_scale(
        effect.limiting_bound, effect.scale, effect.outcome_common
    )
    return EValues(point=point, ci=evalue_from_ratio(bound))


def observed_covariate_evalue(
    lb: float,
    ub: float,
    lb_adj: float,
    ub_adj: float,
    scale: Union[str, Scale] = Scale.RISK_RATIO,
    outcome_common: bool = False,
) -> float:
    """Observed Covariate E-value for moving the full-model limiting bound.

    The limiting side (lower or upper) is chosen from the full-model
    interval (lb, ub) and the same side of the adjusted interval
    (lb_adj, ub_adj) is compared with it. Both bounds are transformed to the
    risk-ratio scale before the ratio is taken.

    Args:
        lb: Lower bound of the full model
        ub: Upper bound of the full model
        lb_adj: Lower bound of the model refit without the covariate(s)
        ub_adj: Upper bound of the model refit without the covariate(s)
        scale: Scale of the bounds
        outcome_common: Whether the outcome is common

    Returns:
        The E-value of the ratio between the two selected bounds, >= 1

    Raises:
        DomainError: If any bound is non-positive or non-finite

    Example:
        >>> round(observed_covariate_evalue(1.11, 1.37, 1.00, 1.23, "hr", True), 6)
        1.358969
    """
    lb, ub = _check_positive(lb, "lb"), _check_positive(ub, "ub")
    lb_adj = _check_positive(lb_adj, "lb_adj")
    ub_adj = _check_positive(ub_adj, "ub_adj")

    if limiting_bound(lb, ub) == lb:
        full, adjusted = lb, lb_adj
    else:
        full, adjusted = ub, ub_adj

    # a full-model bound below 1 flips both bounds
    if full < 1.0:
        full, adjusted = 1.0 / full, 1.0 / adjusted

    b_full = to_risk_ratio_scale(full, scale, outcome_common)
    b_adj = to_risk_ratio_scale(adjusted, scale, outcome_common)
    ratio = max(b_full, b_adj) / min(b_full, b_adj)
    return ratio + math.sqrt(ratio * (ratio - 1.0))


def lin_adjust(lb_obs: float, params: TipParameters) -> float:
    """Adjust a limiting bound for a binary unmeasured confounder.

    Returns lb_obs * (rr_ud * p0 + (1 - p0)) / (rr_ud * p1 + (1 - p1)),
    assuming no exposure-confounder interaction on the outcome.
    """
    lb_obs = _check_positive(lb_obs, "lb_obs")
    rr_ud, p0, p1 = params.rr_ud, params.p0, params.p1
    return lb_obs * (rr_ud * p0 + (1.0 - p0)) / (rr_ud * p1 + (1.0 - p1))


def bias_adjusted_bound(lb_obs: float, rr_eu: float, rr_ud: float) -> float:
    """Limiting bound after adjusting for a confounder with the given strengths.

    This is lb_obs * (rr_ud / rr_eu + 1 - 1 / rr_eu) / rr_ud; the tipping
    point is reached where it equals 1.
    """
    lb_obs = _check_positive(lb_obs, "lb_obs")
    rr_eu = _check_positive(rr_eu, "rr_eu")
    rr_ud = _check_positive(rr_ud, "rr_ud")
    return lb_obs * (rr_ud / rr_eu + (1.0 - 1.0 / rr_eu)) / rr_ud


def tip_rr_ud(lb_obs: float, rr_eu: float) -> float:
    """Minimum confounder-outcome association that tips the limiting bound to 1.

    Args:
        lb_obs: Observed limiting bound (oriented if below 1)
        rr_eu: Exposure-confounder association

    Returns:
        rr_ud = lb_obs * (rr_eu - 1) / (rr_eu - lb_obs)

    Raises:
        NoTippingPointError: If rr_eu <= lb_obs

    Example:
        >>> tip_rr_ud(2.0, 4.0)
        3.0
    """
    lb_obs = orient(lb_obs)
    rr_eu = _check_positive(rr_eu, "rr_eu")
    if lb_obs == 1.0:
        return 1.0
    if rr_eu <= lb_obs:
        raise NoTippingPointError(
            f"no finite tipping association: rr_eu ({rr_eu}) must exceed "
            f"the limiting bound ({lb_obs})"
        )
    return lb_obs * (rr_eu - 1.0) / (rr_eu - lb_obs)


def tipping_curve(
    lb_obs: float, rr_eu_values: Iterable[float]
) -> List[Tuple[float, float]]:
    """Pairs (rr_eu, minimum rr_ud) that tip the limiting bound.

    Candidate rr_eu values with no finite solution are skipped.
    """
    curve = []
    for rr_eu in rr_eu_values:
        try:
            curve.append((float(rr_eu), tip_rr_ud(lb_obs, rr_eu)))
        except NoTippingPointError:
            continue
    return curve
