"""Case-weighted Cox proportional hazards regression.

Coefficients maximize the weighted partial likelihood (Efron or Breslow
handling of tied event times) by Newton-Raphson with step halving. The
reported variance is the robust sandwich built from weighted score
residuals.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.stats import norm

from obsbias.evalue import EffectEstimate, Scale
from obsbias.exceptions import (
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    MonotoneLikelihoodError,
    SchemaError,
)
from obsbias.glm import DesignMatrix
from obsbias.linalg import Standardizer, check_full_rank

logger = logging.getLogger(__name__)

EFRON = "efron"
BRESLOW = "breslow"
TIES_METHODS = (EFRON, BRESLOW)
MAX_ITERATIONS = 30
TOLERANCE = 1e-9
MONOTONE_THRESHOLD = 22.0
_STEP_TOLERANCE = 1e-4
_FLAT_THRESHOLD = 8.0
_MAX_HALVINGS = 30


@dataclass
class SurvivalData:
    """Right-censored survival outcomes with covariates and case weights.

    Attributes:
        time: Positive follow-up times
        event: 1 for an observed event, 0 for censoring
        covariates: Design columns without an intercept
        weights: Positive case weights (all ones when omitted)
    """

    time: np.ndarray
    event: np.ndarray
    covariates: DesignMatrix
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=float)
        n = self.time.shape[0]
        if self.weights is None:
            self.weights = np.ones(n)
        self.weights = np.asarray(self.weights, dtype=float)

        if self.event.shape != (n,) or self.weights.shape != (n,):
            raise SchemaError("time, event and weights must have equal lengths")
        if self.covariates.n != n:
            raise SchemaError(
                f"Covariates have {self.covariates.n} rows, expected {n}"
            )
        if not np.all(np.isfinite(self.time)) or np.any(self.time <= 0):
            raise DomainError("Survival times must be positive and finite")
        if not np.all((self.event == 0) | (self.event == 1)):
            raise DomainError("Event indicator must contain only 0 and 1")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise DomainError("Case weights must be positive and finite")

    @property
    def names(self) -> List[str]:
        return list(self.covariates.names)


@dataclass
class CoxFit:
    """Result of a weighted Cox fit.

    Attributes:
        names: Coefficient names
        coefficients: Estimates in log-hazard units
        robust_covariance: Sandwich covariance from weighted score residuals
        naive_covariance: Inverse of the weighted information matrix
        loglik: Weighted partial log-likelihood at the estimates
        loglik_null: Weighted partial log-likelihood at zero
        iterations: Newton iterations used
        converged: Whether the convergence criteria were met
        ties_method: "efron" or "breslow"
        gradient_norm: Max-norm of the score at the estimates
    """

    names: List[str]
    coefficients: np.ndarray
    robust_covariance: np.ndarray
    naive_covariance: np.ndarray
    loglik: float
    loglik_null: float
    iterations: int
    converged: bool
    ties_method: str
    gradient_norm: float = 0.0

    def _index(self, term: str) -> int:
        try:
            return self.names.index(term)
        except ValueError:
            raise SchemaError(
                f"Unknown term '{term}'; fitted terms are {self.names}"
            ) from None

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self._index(term)])

    def standard_error(self, term: str, robust: bool = True) -> float:
        covariance = self.robust_covariance if robust else self.naive_covariance
        j = self._index(term)
        return float(np.sqrt(max(covariance[j, j], 0.0)))


class _RiskSets:
    """Sorted data and tied-event bookkeeping, built once per fit.

    Rows are sorted by time with events before censorings at equal times,
    so the deaths of every distinct event time are contiguous and each risk
    set is a suffix of the sorted rows.
    """

    def __init__(self, matrix: np.ndarray, data: SurvivalData, ties: str):
        order = np.lexsort((1.0 - data.event, data.time))
        self.order = order
        self.x = matrix[order]
        self.time = data.time[order]
        self.event = data.event[order]
        self.weights = data.weights[order]

        deaths = np.flatnonzero(self.event == 1)
        if deaths.size == 0:
            raise DegenerateDataError("Cox model needs at least one event")
        death_times = self.time[deaths]
        first = np.r_[True, death_times[1:] != death_times[:-1]]
        self.deaths = deaths
        self.group_first = np.flatnonzero(first)
        self.group = np.cumsum(first) - 1
        self.starts = deaths[first]
        self.counts = np.bincount(self.group)
        death_weights = self.weights[deaths]

        if ties == EFRON:
            position = np.arange(deaths.size) - self.group_first[self.group]
            self.fraction = position / self.counts[self.group]
            mean_weight = np.bincount(self.group, weights=death_weights) / self.counts
            self.term_weight = mean_weight[self.group]
        else:
            self.fraction = np.zeros(deaths.size)
            self.term_weight = death_weights

    def evaluate(
        self, beta: np.ndarray, derivatives: bool = True
    ) -> Tuple[float, Optional[np.ndarray], Optional[np.ndarray]]:
        """Weighted partial log-likelihood, score and information at beta."""
        x, deaths, group = self.x, self.deaths, self.group
        eta = x @ beta
        risk = self.weights * np.exp(eta)

        s0 = np.cumsum(risk[::-1])[::-1][self.starts]
        t0 = np.add.reduceat(risk[deaths], self.group_first)
        denominator = s0[group] - self.fraction * t0[group]
        death_weights = self.weights[deaths]
        loglik = float(
            death_weights @ eta[deaths] - self.term_weight @ np.log(denominator)
        )
        if not derivatives:
            return loglik, None, None

        weighted_x = risk[:, None] * x
        s1 = np.cumsum(weighted_x[::-1], axis=0)[::-1][self.starts]
        t1 = np.add.reduceat(weighted_x[deaths], self.group_first, axis=0)
        numerator = s1[group] - self.fraction[:, None] * t1[group]
        means = numerator / denominator[:, None]
        gradient = death_weights @ x[deaths] - self.term_weight @ means

        outer = weighted_x[:, :, None] * x[:, None, :]
        s2 = np.cumsum(outer[::-1], axis=0)[::-1][self.starts]
        t2 = np.add.reduceat(outer[deaths], self.group_first, axis=0)
        second = s2[group] - self.fraction[:, None, None] * t2[group]
        information = np.einsum(
            "t,tij->ij", self.term_weight / denominator, second
        ) - np.einsum("t,ti,tj->ij", self.term_weight, means, means)
        return loglik, gradient, information

    def score_residuals(self, beta: np.ndarray) -> np.ndarray:
        """Unweighted score residuals, one row per subject in input order.

        Weighting each row by its case weight and summing over subjects
        reproduces the score vector.
        """
        x, deaths, group = self.x, self.deaths, self.group
        n, p = x.shape
        eta = x @ beta
        risk = self.weights * np.exp(eta)

        s0 = np.cumsum(risk[::-1])[::-1][self.starts]
        t0 = np.add.reduceat(risk[deaths], self.group_first)
        weighted_x = risk[:, None] * x
        s1 = np.cumsum(weighted_x[::-1], axis=0)[::-1][self.starts]
        t1 = np.add.reduceat(weighted_x[deaths], self.group_first, axis=0)
        denominator = s0[group] - self.fraction * t0[group]
        means = (s1[group] - self.fraction[:, None] * t1[group]) / denominator[:, None]

        n_groups = self.starts.shape[0]
        coef = self.term_weight / denominator
        tied_coef = (1.0 - self.fraction) * coef
        a = np.bincount(group, weights=coef, minlength=n_groups)
        b = _group_sum(group, coef[:, None] * means, n_groups)
        a_tied = np.bincount(group, weights=tied_coef, minlength=n_groups)
        b_tied = _group_sum(group, tied_coef[:, None] * means, n_groups)
        death_mean = _group_sum(group, self.term_weight[:, None] * means, n_groups)
        death_mean /= np.bincount(group, weights=self.term_weight)[:, None]

        # risk sets containing row i are the groups whose start is <= i
        members = np.searchsorted(self.starts, np.arange(n), side="right")
        cum_a = np.r_[0.0, np.cumsum(a)][members]
        cum_b = np.vstack([np.zeros((1, p)), np.cumsum(b, axis=0)])[members]
        own = group
        cum_a[deaths] += a_tied[own] - a[own]
        cum_b[deaths] += b_tied[own] - b[own]

        residuals = -np.exp(eta)[:, None] * (x * cum_a[:, None] - cum_b)
        residuals[deaths] += x[deaths] - death_mean[own]

        unsorted = np.empty_like(residuals)
        unsorted[self.order] = residuals
        return unsorted


def _group_sum(group: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    totals = np.zeros((n_groups, values.shape[1]))
    np.add.at(totals, group, values)
    return totals


def _check_ties(ties: str) -> str:
    ties = str(ties).lower()
    if ties not in TIES_METHODS:
        raise DomainError(f"Unknown ties method '{ties}'; expected efron or breslow")
    return ties


def partial_likelihood(
    data: SurvivalData, beta: np.ndarray, ties: str = EFRON
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Weighted partial log-likelihood, score and information at ``beta``.

    Args:
        data: Survival data
        beta: Coefficients on the original covariate scale
        ties: "efron" or "breslow"

    Returns:
        Tuple of (loglik, gradient, information)
    """
    risk_sets = _RiskSets(data.covariates.matrix, data, _check_ties(ties))
    return risk_sets.evaluate(np.asarray(beta, dtype=float))


def fit_cox(
    data: SurvivalData,
    ties: str = EFRON,
    max_iter: int = MAX_ITERATIONS,
    tol: float = TOLERANCE,
) -> CoxFit:
    """Fit a case-weighted Cox proportional hazards model.

    Args:
        data: Survival data with covariates and weights
        ties: "efron" (default) or "breslow"
        max_iter: Maximum Newton iterations
        tol: Convergence threshold on the log-likelihood change

    Returns:
        CoxFit on the original covariate scale

    Raises:
        DegenerateDataError: If there are no events or no covariates
        RankDeficiencyError: If a covariate is constant or collinear
        MonotoneLikelihoodError: If a coefficient diverges
        ConvergenceError: If Newton-Raphson does not converge in max_iter
    """
    ties = _check_ties(ties)
    names = data.names
    if not names:
        raise DegenerateDataError("Cox model needs at least one covariate")
    matrix = data.covariates.matrix
    check_full_rank(
        np.column_stack([np.ones(matrix.shape[0]), matrix]),
        ["(baseline)"] + names,
    )

    standardizer = Standardizer(matrix, center=True)
    risk_sets = _RiskSets(standardizer.transform(matrix), data, ties)

    beta = np.zeros(len(names))
    loglik, gradient, information = risk_sets.evaluate(beta)
    loglik_null = loglik
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        try:
            factor = scipy.linalg.cho_factor(information)
        except np.linalg.LinAlgError:
            raise _divergence(beta, names, iterations) from None
        step = scipy.linalg.cho_solve(factor, gradient)

        candidate = beta + step
        candidate_loglik, _, _ = risk_sets.evaluate(candidate, derivatives=False)
        halvings = 0
        while (
            not np.isfinite(candidate_loglik) or candidate_loglik < loglik
        ) and halvings < _MAX_HALVINGS:
            step = step / 2.0
            candidate = beta + step
            candidate_loglik, _, _ = risk_sets.evaluate(candidate, derivatives=False)
            halvings += 1

        change = abs(candidate_loglik - loglik)
        beta = candidate
        loglik, gradient, information = risk_sets.evaluate(beta)
        logger.debug(
            "Newton iteration %d: loglik=%.12g change=%.3e halvings=%d",
            iterations,
            loglik,
            change,
            halvings,
        )
        if change < tol and np.max(np.abs(step)) < _STEP_TOLERANCE:
            converged = True
            break
        largest = np.max(np.abs(beta))
        # a flat likelihood far from the origin means the maximum is at infinity
        if largest > MONOTONE_THRESHOLD or (change < tol and largest > _FLAT_THRESHOLD):
            raise _divergence(beta, names, iterations)

    if not converged:
        raise ConvergenceError(
            f"Cox fit did not converge in {max_iter} iterations "
            f"(loglik {loglik:.6g})",
            iterations=iterations,
            diagnostics={
                "loglik": loglik,
                "gradient_norm": float(np.max(np.abs(gradient))),
            },
        )

    try:
        factor = scipy.linalg.cho_factor(information)
    except np.linalg.LinAlgError:
        raise _divergence(beta, names, iterations) from None
    naive = scipy.linalg.cho_solve(factor, np.eye(len(names)))
    dfbeta = (data.weights[:, None] * risk_sets.score_residuals(beta)) @ naive
    robust = dfbeta.T @ dfbeta

    coefficients, robust = standardizer.unscale(beta, robust)
    _, naive = standardizer.unscale(beta, naive)
    return CoxFit(
        names=names,
        coefficients=coefficients,
        robust_covariance=robust,
        naive_covariance=naive,
        loglik=loglik,
        loglik_null=loglik_null,
        iterations=iterations,
        converged=converged,
        ties_method=ties,
        gradient_norm=float(np.max(np.abs(gradient))),
    )


def _divergence(
    beta: np.ndarray, names: List[str], iterations: int
) -> MonotoneLikelihoodError:
    j = int(np.argmax(np.abs(beta)))
    return MonotoneLikelihoodError(
        f"Partial likelihood is monotone in '{names[j]}' (coefficient diverging); "
        "a covariate may perfectly order the event times",
        iterations=iterations,
        diagnostics={"max_abs_coefficient": float(np.abs(beta[j]))},
    )


def effect_with_ci(fit: CoxFit, term: str, level: float = 0.95) -> EffectEstimate:
    """Hazard ratio for ``term`` with a robust Wald confidence interval.

    Args:
        fit: Fitted Cox model
        term: Coefficient name
        level: Two-sided confidence level in (0, 1)

    Returns:
        EffectEstimate on the hazard-ratio scale

    Raises:
        SchemaError: If the term was not fitted
        DomainError: If level is outside (0, 1)
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"Confidence level must lie in (0, 1), got {level}")
    beta = fit.coefficient(term)
    se = fit.standard_error(term, robust=True)
    z = float(norm.ppf(1.0 - (1.0 - level) / 2.0))
    return EffectEstimate(
        estimate=float(np.exp(beta)),
        lcl=float(np.exp(beta - z * se)),
        ucl=float(np.exp(beta + z * se)),
        scale=Scale.HAZARD_RATIO,
    )
