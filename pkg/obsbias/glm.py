"""Logistic regression by iteratively reweighted least squares.

Used to estimate propensity scores. The fitter starts from all-zero
coefficients, halves steps that increase the deviance and stops once the
deviance changes by less than ``tol`` between iterations.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from obsbias.exceptions import (
    ConvergenceError,
    SchemaError,
    SeparationError,
)
from obsbias.linalg import Standardizer, check_full_rank

logger = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"
PROBABILITY_FLOOR = 1e-10
SEPARATION_THRESHOLD = 30.0
MAX_ITERATIONS = 25
TOLERANCE = 1e-8
_MAX_HALVINGS = 30


@dataclass
class DesignMatrix:
    """Named numeric design columns with an optional binary response.

    Attributes:
        names: Column names, the intercept included
        matrix: (n, p) float array
        response: Binary response of length n, or None for prediction-only use
    """

    names: List[str]
    matrix: np.ndarray
    response: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.names):
            raise SchemaError(
                f"Design matrix has shape {self.matrix.shape} but "
                f"{len(self.names)} column names"
            )
        if len(set(self.names)) != len(self.names):
            raise SchemaError(f"Duplicate design column names: {self.names}")
        if not np.all(np.isfinite(self.matrix)):
            raise SchemaError("Design matrix contains missing or non-finite values")
        if self.response is not None:
            self.response = np.asarray(self.response, dtype=float)
            if self.response.shape != (self.matrix.shape[0],):
                raise SchemaError(
                    f"Response has length {self.response.shape[0]}, "
                    f"expected {self.matrix.shape[0]}"
                )

    @classmethod
    def build(
        cls,
        columns: Mapping[str, Sequence[float]],
        response: Optional[Sequence[float]] = None,
        intercept: bool = True,
        n: Optional[int] = None,
    ) -> "DesignMatrix":
        """Assemble a design matrix from named columns.

        Args:
            columns: Ordered mapping of column name to values
            response: Optional binary response
            intercept: Prepend an intercept column named "(Intercept)"
            n: Row count, required only when ``columns`` is empty and no
               response is given

        Example:
            >>> design = DesignMatrix.build({'x': [0, 1, 1]}, response=[0, 1, 0])
            >>> design.names
            ['(Intercept)', 'x']
        """
        if n is None:
            if columns:
                n = len(next(iter(columns.values())))
            elif response is not None:
                n = len(response)
            else:
                raise SchemaError("Cannot infer row count of an empty design")
        names = ([INTERCEPT] if intercept else []) + list(columns)
        blocks = ([np.ones(n)] if intercept else []) + [
            np.asarray(values, dtype=float) for values in columns.values()
        ]
        matrix = np.column_stack(blocks) if blocks else np.empty((n, 0))
        return cls(names=names, matrix=matrix, response=response)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def intercept_index(self) -> Optional[int]:
        return self.names.index(INTERCEPT) if INTERCEPT in self.names else None


@dataclass
class GlmFit:
    """Result of a logistic regression fit.

    Attributes:
        names: Coefficient names
        coefficients: Estimates in log-odds units
        covariance: Inverse Fisher information at the estimates
        deviance: Residual deviance
        iterations: IRLS iterations used
        converged: Whether the deviance tolerance was met
        gradient_norm: Max-norm of the score at the estimates
        warnings: Diagnostics such as suspected quasi-separation
    """

    names: List[str]
    coefficients: np.ndarray
    covariance: np.ndarray
    deviance: float
    iterations: int
    converged: bool
    gradient_norm: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def coefficient(self, name: str) -> float:
        try:
            return float(self.coefficients[self.names.index(name)])
        except ValueError:
            raise SchemaError(f"Unknown coefficient '{name}'") from None

    def as_dict(self) -> Dict[str, float]:
        return {name: float(value) for name, value in zip(self.names, self.coefficients)}


def _probabilities(eta: np.ndarray) -> np.ndarray:
    return np.clip(expit(eta), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)


def _deviance(y: np.ndarray, p: np.ndarray) -> float:
    return float(-2.0 * np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def _information(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    weights = p * (1.0 - p)
    return (x * weights[:, None]).T @ x


def fit_logistic(
    design: DesignMatrix,
    max_iter: int = MAX_ITERATIONS,
    tol: float = TOLERANCE,
) -> GlmFit:
    """Fit a logistic regression of the design response on its columns.

    Args:
        design: Design matrix with a binary response
        max_iter: Maximum IRLS iterations
        tol: Convergence threshold on the absolute deviance change

    Returns:
        GlmFit with coefficients on the original column scale

    Raises:
        SchemaError: If the response is missing or not binary
        RankDeficiencyError: If a column is a linear combination of others
        SeparationError: If the information matrix becomes singular because
                         fitted probabilities saturate
        ConvergenceError: If the deviance does not settle within max_iter

    Example:
        >>> design = DesignMatrix.build({}, response=[0, 1, 1, 1])
        >>> round(fit_logistic(design).coefficient('(Intercept)'), 4)
        1.0986
    """
    if design.response is None:
        raise SchemaError("Logistic regression needs a response vector")
    y = design.response
    if not np.all((y == 0) | (y == 1)):
        raise SchemaError("Logistic regression response must contain only 0 and 1")

    check_full_rank(design.matrix, design.names)
    standardizer = Standardizer(design.matrix, intercept=design.intercept_index)
    x = standardizer.transform(design.matrix)

    beta = np.zeros(x.shape[1])
    p = _probabilities(x @ beta)
    deviance = _deviance(y, p)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        score = x.T @ (y - p)
        try:
            factor = scipy.linalg.cho_factor(_information(x, p))
        except np.linalg.LinAlgError:
            raise SeparationError(
                "Information matrix is numerically singular; fitted probabilities "
                "saturate (complete separation)"
            ) from None
        step = scipy.linalg.cho_solve(factor, score)

        candidate = beta + step
        candidate_p = _probabilities(x @ candidate)
        candidate_deviance = _deviance(y, candidate_p)
        halvings = 0
        while candidate_deviance > deviance and halvings < _MAX_HALVINGS:
            step = step / 2.0
            candidate = beta + step
            candidate_p = _probabilities(x @ candidate)
            candidate_deviance = _deviance(y, candidate_p)
            halvings += 1

        change = abs(deviance - candidate_deviance)
        beta, p, deviance = candidate, candidate_p, candidate_deviance
        logger.debug(
            "IRLS iteration %d: deviance=%.10g change=%.3e halvings=%d",
            iterations,
            deviance,
            change,
            halvings,
        )
        if change < tol:
            converged = True
            break

    eta = x @ beta
    saturated = float(np.max(np.abs(eta))) if eta.size else 0.0
    if not converged:
        diagnostics = {"deviance": deviance, "max_abs_linear_predictor": saturated}
        if saturated > SEPARATION_THRESHOLD:
            raise SeparationError(
                f"Logistic fit diverges (max |linear predictor| = {saturated:.1f}); "
                "the response is separated by the covariates"
            )
        raise ConvergenceError(
            f"Logistic fit did not converge in {max_iter} iterations "
            f"(deviance {deviance:.6g})",
            iterations=iterations,
            diagnostics=diagnostics,
        )

    try:
        factor = scipy.linalg.cho_factor(_information(x, p))
    except np.linalg.LinAlgError:
        raise SeparationError(
            "Information matrix is numerically singular at the solution"
        ) from None
    covariance = scipy.linalg.cho_solve(factor, np.eye(x.shape[1]))

    warnings = []
    if saturated > SEPARATION_THRESHOLD:
        message = (
            f"Possible quasi-separation: max |linear predictor| = {saturated:.1f}"
        )
        logger.warning(message)
        warnings.append(message)

    coefficients, covariance = standardizer.unscale(beta, covariance)
    gradient = design.matrix.T @ (y - _probabilities(design.matrix @ coefficients))
    return GlmFit(
        names=list(design.names),
        coefficients=coefficients,
        covariance=covariance,
        deviance=deviance,
        iterations=iterations,
        converged=converged,
        gradient_norm=float(np.max(np.abs(gradient))) if gradient.size else 0.0,
        warnings=warnings,
    )


def predict_probabilities(fit: GlmFit, design: DesignMatrix) -> np.ndarray:
    """Fitted probabilities for the rows of ``design``.

    Values are clamped to [1e-10, 1 - 1e-10] so they stay strictly inside (0, 1).

    Raises:
        SchemaError: If the design columns differ from the fitted coefficients
    """
    if list(design.names) != list(fit.names):
        raise SchemaError(
            f"Design columns {design.names} do not match fitted coefficients "
            f"{fit.names}"
        )
    return _probabilities(design.matrix @ fit.coefficients)
