"""Linear algebra helpers shared by the logistic and Cox fitters."""

from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from obsbias.exceptions import RankDeficiencyError

_RANK_TOLERANCE = 1e-10


def check_full_rank(
    matrix: np.ndarray, names: Sequence[str], stage: Optional[str] = None
) -> None:
    """Raise if the columns of ``matrix`` are linearly dependent.

    Columns are scaled to unit norm and factored with a column-pivoted QR.
    The reported column is the first one that depends on the columns before it.

    Args:
        matrix: (n, p) design matrix
        names: Column names, length p
        stage: Optional stage name attached to the error

    Raises:
        RankDeficiencyError: If rank(matrix) < p
    """
    n, p = matrix.shape
    if p == 0:
        return
    norms = np.linalg.norm(matrix, axis=0)
    for j in np.flatnonzero(norms == 0):
        raise RankDeficiencyError(names[j], stage=stage)
    if n < p:
        raise RankDeficiencyError(names[n], stage=stage)

    scaled = matrix / norms
    if _rank(scaled) == p:
        return
    for j in range(1, p):
        if _rank(scaled[:, : j + 1]) < j + 1:
            raise RankDeficiencyError(names[j], stage=stage)


def _rank(matrix: np.ndarray) -> int:
    _, r, _ = scipy.linalg.qr(matrix, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(r))
    return int(np.sum(diagonal > _RANK_TOLERANCE * max(matrix.shape) * diagonal[0]))


class Standardizer:
    """Affine rescaling of design columns to zero mean and unit variance.

    Fitting in standardized coordinates keeps the normal equations well
    conditioned; ``unscale`` maps coefficients and covariance back.

    Args:
        matrix: (n, p) design matrix
        intercept: Index of the intercept column, or None. The intercept
                   column is left untouched and other columns are centered
                   only when an intercept is present or ``center`` is True.
        center: Center columns even without an intercept (the Cox model is
                invariant to centering)
    """

    def __init__(
        self, matrix: np.ndarray, intercept: Optional[int] = None, center: bool = False
    ):
        p = matrix.shape[1]
        self.intercept = intercept
        self.means = np.zeros(p)
        self.scales = np.ones(p)
        for j in range(p):
            if j == intercept:
                continue
            column = matrix[:, j]
            if intercept is not None or center:
                self.means[j] = column.mean()
            spread = column.std()
            self.scales[j] = spread if spread > 0 else 1.0

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.means) / self.scales

    def unscale(self, coefficients: np.ndarray, covariance: np.ndarray):
        """Map standardized-coordinate estimates back to the original columns.

        Returns:
            Tuple of (coefficients, covariance) on the original scale
        """
        jacobian = np.diag(1.0 / self.scales)
        if self.intercept is not None:
            jacobian[self.intercept, :] -= self.means / self.scales
            jacobian[self.intercept, self.intercept] = 1.0
        original = jacobian @ coefficients
        original_cov = jacobian @ covariance @ jacobian.T
        original_cov = (original_cov + original_cov.T) / 2.0
        return original, original_cov
