"""Observed-bias analysis: propensity model, overlap weights, weighted Cox fit
and the leave-covariate-out refits that ground the E-value in observed data.

Example:
    >>> config = AnalysisConfig(exposure="exposure", time="time", event="event",
    ...                         covariates=["age", "sex"])
    >>> result = analyze(dataset, config, workers=4)
    >>> result.full.estimate, len(result.records)
    (1.31, 4)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from obsbias.evalue import (
    EffectEstimate,
    Scale,
    limiting_bound,
    observed_covariate_evalue,
)
from obsbias.exceptions import (
    ConfigValidationError,
    DomainError,
    FitError,
    SchemaError,
)
from obsbias.glm import DesignMatrix, GlmFit, fit_logistic, predict_probabilities
from obsbias.query import RecordQuery
from obsbias.survival import (
    EFRON,
    TIES_METHODS,
    CoxFit,
    SurvivalData,
    effect_with_ci,
    fit_cox,
)

if TYPE_CHECKING:
    from obsbias.io_store import Dataset

logger = logging.getLogger(__name__)

KIND_FULL = "full"
KIND_COVARIATE = "covariate"
KIND_GROUP = "group"
KIND_TIP = "tip"
KINDS = (KIND_FULL, KIND_COVARIATE, KIND_GROUP, KIND_TIP)
ORDER_FIELDS = ("estimate", "lcl", "ucl", "oce")

FULL_LABEL = "Full model"
TIP_LB_LABEL = "Hypothetical unmeasured confounder (Tip LB)"
TIP_POINT_LABEL = "Hypothetical unmeasured confounder (Tip Point Est)"

STAGE_PROPENSITY = "propensity"
STAGE_OUTCOME = "outcome"

_REQUIRED_KEYS = ("exposure", "time", "event", "covariates")
_OPTIONAL_KEYS = (
    "groups",
    "outcome_common",
    "ci_level",
    "ties",
    "labels",
    "order_by",
    "theme",
)


@dataclass
class AnalysisConfig:
    """Column roles and options for an observed-bias analysis.

    Attributes:
        exposure: Binary exposure column
        time: Follow-up time column
        event: Event indicator column
        covariates: Ordered covariate names; a categorical source column
                    stands for all of its indicator columns
        groups: Named covariate groups dropped together
        outcome_common: Whether the outcome is common (HR transform applies)
        ci_level: Confidence level of the reported intervals
        ties: Cox ties method, "efron" or "breslow"
        labels: Display labels for covariates and groups
        order_by: Record field used to order the output
        theme: Plot theme overrides
    """

    exposure: str
    time: str
    event: str
    covariates: List[str]
    groups: Dict[str, List[str]] = field(default_factory=dict)
    outcome_common: bool = False
    ci_level: float = 0.95
    ties: str = EFRON
    labels: Dict[str, str] = field(default_factory=dict)
    order_by: str = "lcl"
    theme: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("exposure", "time", "event"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ConfigValidationError(
                    f"'{name}' must be a non-empty column name, got {value!r}",
                    field=name,
                )
        roles = [self.exposure, self.time, self.event]
        if len(set(roles)) != 3:
            raise ConfigValidationError(
                f"exposure, time and event must be distinct columns, got {roles}",
                field="exposure",
            )

        if not isinstance(self.covariates, list) or not all(
            isinstance(c, str) and c for c in self.covariates
        ):
            raise ConfigValidationError(
                "'covariates' must be a list of column names", field="covariates"
            )
        seen = set()
        for name in self.covariates:
            if name in seen:
                raise ConfigValidationError(
                    f"Covariate '{name}' is listed more than once", field="covariates"
                )
            if name in roles:
                raise ConfigValidationError(
                    f"Covariate '{name}' is also the exposure, time or event column",
                    field="covariates",
                )
            seen.add(name)

        if not isinstance(self.groups, dict):
            raise ConfigValidationError(
                "'groups' must map group names to covariate lists", field="groups"
            )
        for group, members in self.groups.items():
            if group in seen:
                raise ConfigValidationError(
                    f"Group name '{group}' collides with a covariate name",
                    field=f"groups.{group}",
                )
            if not isinstance(members, list) or not members:
                raise ConfigValidationError(
                    f"Group '{group}' must be a non-empty list of covariates",
                    field=f"groups.{group}",
                )
            for member in members:
                if member not in seen:
                    raise ConfigValidationError(
                        f"Group '{group}' references '{member}', which is not "
                        "a listed covariate",
                        field=f"groups.{group}",
                    )
            if len(set(members)) != len(members):
                raise ConfigValidationError(
                    f"Group '{group}' lists a covariate more than once",
                    field=f"groups.{group}",
                )

        if not isinstance(self.outcome_common, bool):
            raise ConfigValidationError(
                f"'outcome_common' must be true or false, got {self.outcome_common!r}",
                field="outcome_common",
            )
        if (
            isinstance(self.ci_level, bool)
            or not isinstance(self.ci_level, (int, float))
            or not 0.0 < self.ci_level < 1.0
        ):
            raise ConfigValidationError(
                f"'ci_level' must lie in (0, 1), got {self.ci_level!r}",
                field="ci_level",
            )
        self.ci_level = float(self.ci_level)
        if self.ties not in TIES_METHODS:
            raise ConfigValidationError(
                f"'ties' must be one of {list(TIES_METHODS)}, got {self.ties!r}",
                field="ties",
            )
        if not isinstance(self.labels, dict) or not all(
            isinstance(v, str) for v in self.labels.values()
        ):
            raise ConfigValidationError(
                "'labels' must map names to display strings", field="labels"
            )
        if self.order_by not in ORDER_FIELDS:
            raise ConfigValidationError(
                f"'order_by' must be one of {list(ORDER_FIELDS)}, got {self.order_by!r}",
                field="order_by",
            )
        if not isinstance(self.theme, dict):
            raise ConfigValidationError("'theme' must be an object", field="theme")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "AnalysisConfig":
        """Build a config from a parsed JSON object.

        Raises:
            ConfigValidationError: If a required key is missing, a key is
                                   unknown or a value fails validation
        """
        if not isinstance(data, Mapping):
            raise ConfigValidationError("Analysis configuration must be an object")
        for key in _REQUIRED_KEYS:
            if key not in data:
                raise ConfigValidationError(
                    f"Missing required configuration key '{key}'", field=key
                )
        unknown = sorted(set(data) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS))
        if unknown:
            raise ConfigValidationError(
                f"Unknown configuration key '{unknown[0]}'", field=unknown[0]
            )
        return cls(**dict(data))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "exposure": self.exposure,
            "time": self.time,
            "event": self.event,
            "covariates": list(self.covariates),
            "groups": {name: list(members) for name, members in self.groups.items()},
            "outcome_common": self.outcome_common,
            "ci_level": self.ci_level,
            "ties": self.ties,
            "labels": dict(self.labels),
            "order_by": self.order_by,
            "theme": dict(self.theme),
        }

    def display_label(self, name: str) -> str:
        return self.labels.get(name, name)


@dataclass(frozen=True)
class DropEntry:
    """One entry of a drop plan: a covariate or a named group of covariates."""

    label: str
    kind: str
    covariates: Tuple[str, ...]


@dataclass
class DropPlan:
    """Ordered covariate sets to leave out of the analysis one entry at a time."""

    entries: List[DropEntry]

    def __post_init__(self) -> None:
        labels = [entry.label for entry in self.entries]
        if len(set(labels)) != len(labels):
            raise SchemaError(f"Drop plan labels must be unique, got {labels}")

    @classmethod
    def singletons(cls, covariates: Sequence[str]) -> "DropPlan":
        """Drop every covariate on its own."""
        return cls([DropEntry(name, KIND_COVARIATE, (name,)) for name in covariates])

    @classmethod
    def from_config(cls, config: AnalysisConfig) -> "DropPlan":
        """Every covariate on its own, then the configured groups in order."""
        plan = cls.singletons(config.covariates)
        plan.entries.extend(
            DropEntry(name, KIND_GROUP, tuple(members))
            for name, members in config.groups.items()
        )
        return plan

    def __iter__(self) -> Iterator[DropEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ObservedBiasRecord:
    """One row of the observed-bias table.

    Failed refits keep their label and kind, carry the error message and
    have NaN in every numeric field.
    """

    label: str
    kind: str
    estimate: float
    lcl: float
    ucl: float
    oce: Optional[float] = None
    dropped: Tuple[str, ...] = ()
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"Unknown record kind '{self.kind}'")
        object.__setattr__(self, "dropped", tuple(self.dropped))
        if self.error is not None:
            return
        if not all(math.isfinite(v) and v > 0 for v in (self.estimate, self.lcl, self.ucl)):
            raise SchemaError(
                f"Record '{self.label}' needs positive finite estimate and limits"
            )
        if not self.lcl <= self.estimate <= self.ucl:
            raise SchemaError(
                f"Record '{self.label}' violates lcl <= estimate <= ucl"
            )
        if (self.oce is None) != (self.kind == KIND_FULL):
            raise SchemaError(
                f"Record '{self.label}': oce must be present exactly when kind is not 'full'"
            )

    @classmethod
    def failed(
        cls, label: str, kind: str, error: str, dropped: Sequence[str] = ()
    ) -> "ObservedBiasRecord":
        nan = math.nan
        return cls(label, kind, nan, nan, nan, oce=nan, dropped=tuple(dropped), error=error)

    @property
    def ok(self) -> bool:
        return self.error is None

    def effect(self, outcome_common: bool = False) -> EffectEstimate:
        """The record's triple as a hazard-ratio EffectEstimate."""
        return EffectEstimate(
            self.estimate,
            self.lcl,
            self.ucl,
            Scale.HAZARD_RATIO,
            outcome_common=outcome_common,
        )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "kind": self.kind,
            "estimate": self.estimate,
            "lcl": self.lcl,
            "ucl": self.ucl,
            "oce": self.oce,
            "dropped": list(self.dropped),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ObservedBiasRecord":
        def number(key: str) -> float:
            value = data.get(key)
            return math.nan if value is None else float(value)

        kind = data.get("kind")
        oce = data.get("oce")
        return cls(
            label=str(data["label"]),
            kind=kind,
            estimate=number("estimate"),
            lcl=number("lcl"),
            ucl=number("ucl"),
            oce=None if oce is None and kind == KIND_FULL else number("oce"),
            dropped=tuple(data.get("dropped") or ()),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class BalanceRecord:
    """Standardized mean difference of one covariate before and after weighting."""

    covariate: str
    smd_unweighted: float
    smd_weighted: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.smd_unweighted) and math.isfinite(self.smd_weighted)):
            raise SchemaError(f"Balance for '{self.covariate}' is not finite")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "covariate": self.covariate,
            "smd_unweighted": self.smd_unweighted,
            "smd_weighted": self.smd_weighted,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BalanceRecord":
        return cls(
            str(data["covariate"]),
            float(data["smd_unweighted"]),
            float(data["smd_weighted"]),
        )


@dataclass(frozen=True)
class CoefficientRecord:
    """Hazard ratio and robust interval of one term of the full outcome model."""

    term: str
    hr: float
    lcl: float
    ucl: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.hr, self.lcl, self.ucl)):
            raise SchemaError(f"Coefficient for '{self.term}' is not finite")

    def as_dict(self) -> Dict[str, Any]:
        return {"term": self.term, "hr": self.hr, "lcl": self.lcl, "ucl": self.ucl}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CoefficientRecord":
        return cls(
            str(data["term"]), float(data["hr"]), float(data["lcl"]), float(data["ucl"])
        )


def coefficient_table(fit: CoxFit, level: float = 0.95) -> List[CoefficientRecord]:
    """One row per fitted term, exposure first, in model column order."""
    rows = []
    for term in fit.names:
        effect = effect_with_ci(fit, term, level)
        rows.append(CoefficientRecord(term, effect.estimate, effect.lcl, effect.ucl))
    return rows


@dataclass
class FullAnalysis:
    """Result of the all-covariate analysis.

    Attributes:
        full: The full-model record
        balance: Covariate balance before and after weighting
        propensity: Fitted propensity scores
        weights: Overlap weights
        propensity_fit: Logistic fit, or None when there are no covariates
        outcome_fit: Weighted Cox fit
        n_rows: Complete-case row count
        coefficients: Hazard ratio of every outcome-model term
    """

    full: ObservedBiasRecord
    balance: List[BalanceRecord]
    propensity: np.ndarray
    weights: np.ndarray
    propensity_fit: Optional[GlmFit]
    outcome_fit: CoxFit
    n_rows: int
    coefficients: List[CoefficientRecord] = field(default_factory=list)
    prepared: Optional["_Prepared"] = field(default=None, repr=False)


@dataclass
class AnalysisResult:
    """Full analysis plus the ordered drop and tip records."""

    analysis: FullAnalysis
    records: List[ObservedBiasRecord]
    config: AnalysisConfig

    @property
    def full(self) -> ObservedBiasRecord:
        return self.analysis.full

    @property
    def balance(self) -> List[BalanceRecord]:
        return self.analysis.balance

    @property
    def coefficients(self) -> List[CoefficientRecord]:
        return self.analysis.coefficients


@dataclass
class _Prepared:
    """Complete-case arrays shared read-only by every refit."""

    exposure: np.ndarray
    time: np.ndarray
    event: np.ndarray
    columns: Dict[str, np.ndarray]
    sources: Dict[str, List[str]]

    @property
    def n(self) -> int:
        return self.exposure.shape[0]


def overlap_weights(propensity: Sequence[float], exposure: Sequence[float]) -> np.ndarray:
    """Overlap weights: 1 - p for exposed rows and p for unexposed rows.

    Raises:
        SchemaError: If lengths differ or the exposure is not binary
        DomainError: If a propensity lies outside (0, 1)

    Example:
        >>> overlap_weights([0.8, 0.8], [1, 0])
        array([0.2, 0.8])
    """
    p = np.asarray(propensity, dtype=float)
    z = np.asarray(exposure, dtype=float)
    if p.shape != z.shape:
        raise SchemaError(
            f"propensity has {p.shape[0]} values but exposure has {z.shape[0]}"
        )
    if not np.all((z == 0) | (z == 1)):
        raise SchemaError("Exposure must contain only 0 and 1")
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("Propensity scores must lie strictly inside (0, 1)")
    return np.where(z == 1, 1.0 - p, p)


def _arm_variance(values: np.ndarray) -> float:
    return float(np.var(values, ddof=1)) if values.size > 1 else 0.0


def standardized_mean_difference(
    x: Sequence[float],
    exposure: Sequence[float],
    weights: Optional[Sequence[float]] = None,
) -> float:
    """Difference of (weighted) arm means over the unweighted pooled SD.

    The denominator sqrt((s1^2 + s0^2) / 2) uses unweighted sample
    variances, so pre- and post-weighting values share one ruler.

    Raises:
        SchemaError: If lengths differ or the exposure is not binary
        DomainError: If an arm is empty, a weight is not positive or the
                     pooled SD is zero
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(exposure, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if not (x.shape == z.shape == w.shape):
        raise SchemaError("x, exposure and weights must have equal lengths")
    if not np.all((z == 0) | (z == 1)):
        raise SchemaError("Exposure must contain only 0 and 1")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DomainError("Weights must be positive and finite")
    treated, control = z == 1, z == 0
    if not treated.any() or not control.any():
        raise DomainError("Both exposure arms must be non-empty")

    pooled = math.sqrt((_arm_variance(x[treated]) + _arm_variance(x[control])) / 2.0)
    if pooled == 0.0:
        raise DomainError("Standardized mean difference is undefined: pooled SD is 0")
    difference = np.average(x[treated], weights=w[treated]) - np.average(
        x[control], weights=w[control]
    )
    return float(difference / pooled)


def _prepare(data: "Dataset", config: AnalysisConfig) -> _Prepared:
    sources = {name: data.resolve(name) for name in config.covariates}
    design_columns = [column for name in config.covariates for column in sources[name]]
    needed = [config.exposure, config.time, config.event] + design_columns
    for name in (config.exposure, config.time, config.event):
        data.resolve(name)

    frame = data.frame[needed]
    missing = frame.isna().sum()
    complete = frame.notna().all(axis=1).to_numpy()
    if not complete.all():
        for column, count in missing[missing > 0].items():
            logger.warning("Column '%s' has %d missing value(s)", column, int(count))
        logger.warning(
            "Complete-case analysis drops %d of %d rows",
            int((~complete).sum()),
            complete.size,
        )
    frame = frame[complete]

    def column(name: str) -> np.ndarray:
        return frame[name].to_numpy(dtype=float)

    exposure = column(config.exposure)
    if not np.all((exposure == 0) | (exposure == 1)):
        raise SchemaError(f"Exposure column '{config.exposure}' must contain only 0 and 1")
    if not (exposure == 1).any() or not (exposure == 0).any():
        raise DomainError("Both exposure arms must be non-empty")
    return _Prepared(
        exposure=exposure,
        time=column(config.time),
        event=column(config.event),
        columns={name: column(name) for name in design_columns},
        sources=sources,
    )


def _with_stage(exc: FitError, stage: str) -> FitError:
    if exc.stage is None:
        exc.stage = stage
    return exc


def _fit_effect(
    prepared: _Prepared, columns: Sequence[str], config: AnalysisConfig
) -> Tuple[EffectEstimate, np.ndarray, np.ndarray, Optional[GlmFit], CoxFit]:
    """Propensity model, overlap weights and weighted Cox fit on ``columns``."""
    z = prepared.exposure
    selected = {name: prepared.columns[name] for name in columns}

    propensity_fit = None
    if selected:
        design = DesignMatrix.build(selected, response=z)
        try:
            propensity_fit = fit_logistic(design)
        except FitError as exc:
            raise _with_stage(exc, STAGE_PROPENSITY)
        propensity = predict_probabilities(propensity_fit, design)
    else:
        propensity = np.full(prepared.n, 0.5)
    weights = overlap_weights(propensity, z)

    outcome_columns = {config.exposure: z}
    outcome_columns.update(selected)
    data = SurvivalData(
        time=prepared.time,
        event=prepared.event,
        covariates=DesignMatrix.build(outcome_columns, intercept=False),
        weights=weights,
    )
    try:
        outcome_fit = fit_cox(data, ties=config.ties)
    except FitError as exc:
        raise _with_stage(exc, STAGE_OUTCOME)
    effect = effect_with_ci(outcome_fit, config.exposure, config.ci_level)
    return effect, propensity, weights, propensity_fit, outcome_fit


def run_full_analysis(data: "Dataset", config: AnalysisConfig) -> FullAnalysis:
    """Fit the propensity and outcome models with every covariate.

    Raises:
        SchemaError: If a configured column is missing or the exposure is not binary
        FitError: If a fit fails; ``stage`` names the model
    """
    prepared = _prepare(data, config)
    columns = list(prepared.columns)
    effect, propensity, weights, propensity_fit, outcome_fit = _fit_effect(
        prepared, columns, config
    )
    full = ObservedBiasRecord(
        label=FULL_LABEL,
        kind=KIND_FULL,
        estimate=effect.estimate,
        lcl=effect.lcl,
        ucl=effect.ucl,
    )
    balance = [
        BalanceRecord(
            covariate=name,
            smd_unweighted=standardized_mean_difference(
                prepared.columns[name], prepared.exposure
            ),
            smd_weighted=standardized_mean_difference(
                prepared.columns[name], prepared.exposure, weights
            ),
        )
        for name in columns
    ]
    logger.info(
        "Full model: HR %.6g (%.6g, %.6g) on %d rows",
        full.estimate,
        full.lcl,
        full.ucl,
        prepared.n,
    )
    return FullAnalysis(
        full=full,
        balance=balance,
        propensity=propensity,
        weights=weights,
        propensity_fit=propensity_fit,
        outcome_fit=outcome_fit,
        n_rows=prepared.n,
        coefficients=coefficient_table(outcome_fit, config.ci_level),
        prepared=prepared,
    )


def _oce(full: ObservedBiasRecord, lcl: float, ucl: float, config: AnalysisConfig) -> float:
    return observed_covariate_evalue(
        full.lcl,
        full.ucl,
        lcl,
        ucl,
        Scale.HAZARD_RATIO,
        config.outcome_common,
    )


def _refit(
    prepared: _Prepared,
    entry: DropEntry,
    full: ObservedBiasRecord,
    config: AnalysisConfig,
) -> ObservedBiasRecord:
    dropped = {column for name in entry.covariates for column in prepared.sources[name]}
    columns = [name for name in prepared.columns if name not in dropped]
    try:
        effect, _, _, _, _ = _fit_effect(prepared, columns, config)
    except (FitError, ValueError) as exc:
        logger.warning("Refit without '%s' failed: %s", entry.label, exc)
        return ObservedBiasRecord.failed(
            entry.label, entry.kind, str(exc), dropped=entry.covariates
        )
    record = ObservedBiasRecord(
        label=entry.label,
        kind=entry.kind,
        estimate=effect.estimate,
        lcl=effect.lcl,
        ucl=effect.ucl,
        oce=_oce(full, effect.lcl, effect.ucl, config),
        dropped=entry.covariates,
    )
    logger.info(
        "Dropped %s: HR %.6g (%.6g, %.6g), OCE %.6g",
        entry.label,
        record.estimate,
        record.lcl,
        record.ucl,
        record.oce,
    )
    return record


def run_observed_bias(
    data: "Dataset",
    config: AnalysisConfig,
    workers: int = 1,
    plan: Optional[DropPlan] = None,
    full: Optional[FullAnalysis] = None,
) -> List[ObservedBiasRecord]:
    """Refit both models without each drop-plan entry.

    Args:
        data: Dataset holding every configured column
        config: Analysis configuration
        workers: Number of refits run concurrently
        plan: Drop plan; defaults to every covariate, then every group
        full: Result of run_full_analysis, fitted here when omitted

    Returns:
        The full record followed by one record per plan entry, in plan
        order. A refit that fails yields a record flagged with its error.

    Raises:
        DomainError: If workers < 1
        FitError: If the full analysis itself fails
    """
    if workers < 1:
        raise DomainError(f"workers must be at least 1, got {workers}")
    plan = plan if plan is not None else DropPlan.from_config(config)
    for entry in plan:
        for name in entry.covariates:
            if name not in config.covariates:
                raise SchemaError(
                    f"Drop entry '{entry.label}' references unknown covariate '{name}'"
                )
    if full is None:
        full = run_full_analysis(data, config)
    prepared = full.prepared if full.prepared is not None else _prepare(data, config)

    def refit(entry: DropEntry) -> ObservedBiasRecord:
        return _refit(prepared, entry, full.full, config)

    if workers == 1 or len(plan) <= 1:
        records = [refit(entry) for entry in plan]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(refit, plan))
    return [full.full] + records


def tip_rows(
    full: ObservedBiasRecord, config: AnalysisConfig
) -> Tuple[ObservedBiasRecord, ObservedBiasRecord]:
    """Hypothetical confounders that shift the full effect onto the null.

    The first row divides the full triple by its limiting bound (so that
    bound becomes exactly 1), the second by the point estimate.
    """
    rows = []
    for label, tip in (
        (TIP_LB_LABEL, limiting_bound(full.lcl, full.ucl)),
        (TIP_POINT_LABEL, full.estimate),
    ):
        lcl, ucl = full.lcl / tip, full.ucl / tip
        rows.append(
            ObservedBiasRecord(
                label=label,
                kind=KIND_TIP,
                estimate=full.estimate / tip,
                lcl=lcl,
                ucl=ucl,
                oce=_oce(full, lcl, ucl, config),
            )
        )
    return rows[0], rows[1]


def order_records(
    records: Sequence[ObservedBiasRecord], by: str = "lcl"
) -> List[ObservedBiasRecord]:
    """Stable ascending sort on ``by`` with ties broken by label.

    Records with a missing value (failed refits, the full row when sorting
    on oce) sort last.

    Raises:
        SchemaError: If ``by`` is not one of estimate, lcl, ucl, oce
    """
    if by not in ORDER_FIELDS:
        raise SchemaError(f"Cannot order records by '{by}'; expected one of {ORDER_FIELDS}")

    def key(record: ObservedBiasRecord):
        value = getattr(record, by)
        missing = value is None or math.isnan(value)
        return (missing, 0.0 if missing else value, record.label)

    return RecordQuery(records).sort(key=key).execute()


def analyze(
    data: "Dataset",
    config: AnalysisConfig,
    workers: int = 1,
    plan: Optional[DropPlan] = None,
) -> AnalysisResult:
    """Run the whole analysis: full fit, drop refits, tip rows and ordering."""
    analysis = run_full_analysis(data, config)
    records = run_observed_bias(data, config, workers=workers, plan=plan, full=analysis)
    drops = RecordQuery(records).where(lambda r: r.kind != KIND_FULL).execute()
    ordered = order_records(
        drops + list(tip_rows(analysis.full, config)), by=config.order_by
    )
    failures = RecordQuery(ordered).where(lambda r: not r.ok).count()
    if failures:
        logger.warning("%d refit(s) failed and are flagged in the output", failures)
    return AnalysisResult(analysis=analysis, records=ordered, config=config)
