"""Exception hierarchy for obsbias.

Bad input raises a ``ValueError`` subclass; numerical failures during model
fitting raise a ``RuntimeError`` subclass. The CLI maps the first family to
exit code 2 and the second to exit code 3.
"""

from typing import Any, Dict, Optional


class ObsBiasError(Exception):
    """Base class for every error raised by obsbias."""


class DomainError(ObsBiasError, ValueError):
    """A numeric argument lies outside the domain of a formula."""


class NoTippingPointError(DomainError):
    """No finite confounder-outcome association tips the bound to the null."""


class SchemaError(ObsBiasError, ValueError):
    """Column names or record fields do not match what an operation expects."""


class ConfigValidationError(ObsBiasError, ValueError):
    """An analysis configuration failed validation.

    Attributes:
        field: Name of the offending configuration field
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ParseError(ObsBiasError, ValueError):
    """A CSV file could not be parsed.

    Attributes:
        row: 1-based data row number (header is row 0), if known
        column: Column name or 1-based column index, if known
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Any = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class FitError(ObsBiasError, RuntimeError):
    """A model fit failed.

    Attributes:
        stage: Pipeline stage that was running, set by the caller that
               catches and re-raises (e.g. "propensity", "outcome")
    """

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class RankDeficiencyError(FitError):
    """The design matrix is rank deficient.

    Attributes:
        column: Name of the first column found to be linearly dependent
    """

    def __init__(self, column: str, stage: Optional[str] = None):
        super().__init__(
            f"Design matrix is rank deficient: column '{column}' is a linear "
            "combination of the preceding columns",
            stage=stage,
        )
        self.column = column


class ConvergenceError(FitError):
    """An iterative fitter did not converge within its iteration limit."""

    def __init__(
        self,
        message: str,
        iterations: int,
        diagnostics: Optional[Dict[str, float]] = None,
        stage: Optional[str] = None,
    ):
        super().__init__(message, stage=stage)
        self.iterations = iterations
        self.diagnostics = diagnostics or {}


class SeparationError(FitError):
    """Complete separation: the logistic likelihood has no finite maximum."""


class DegenerateDataError(FitError):
    """The data cannot support the requested model (e.g. no events)."""


class MonotoneLikelihoodError(ConvergenceError):
    """The Cox partial likelihood increases without bound along a direction."""
