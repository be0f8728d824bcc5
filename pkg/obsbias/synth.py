"""Seeded synthetic survival data with planted confounding.

Streams come from numpy's PCG64 bit generator, so a (spec, seed) pair
reproduces the same dataset on every platform numpy supports. Draws happen
in a fixed order: the covariate matrix (row-major standard normals), one
uniform per row for the exposure, then one standard exponential per row
for the event time.

Example:
    >>> spec = SynthSpec(n=500, seed=7, confounders=[Confounder("x1", 1.0, 1.0)])
    >>> dataset = generate(spec)
    >>> dataset.columns
    ['exposure', 'time', 'event', 'x1']
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from obsbias.document import JsonDocument
from obsbias.exceptions import ConfigValidationError
from obsbias.io_store import Dataset
from obsbias.pipeline import AnalysisConfig

logger = logging.getLogger(__name__)

EXPOSURE = "exposure"
TIME = "time"
EVENT = "event"
RESERVED = (EXPOSURE, TIME, EVENT)
MIN_ROWS = 10
_SPEC_KEYS = (
    "n",
    "seed",
    "confounders",
    "null_covariates",
    "baseline_hazard",
    "exposure_loghr",
    "censor_time",
)


@dataclass(frozen=True)
class Confounder:
    """A standard normal covariate affecting exposure and hazard."""

    name: str
    effect_on_exposure: float = 0.0
    effect_on_hazard: float = 0.0


@dataclass
class SynthSpec:
    """Parameters of a synthetic dataset.

    Attributes:
        n: Row count, at least 10
        seed: Seed of the PCG64 generator, 0 <= seed < 2**64
        confounders: Covariates with log-odds and log-hazard effects
        null_covariates: Extra covariates unrelated to exposure and outcome,
                         named null1, null2, ...
        baseline_hazard: Constant baseline hazard
        exposure_loghr: Log hazard ratio of the exposure
        censor_time: Administrative censoring time
    """

    n: int
    seed: int
    confounders: List[Confounder] = field(default_factory=list)
    null_covariates: int = 0
    baseline_hazard: float = 0.01
    exposure_loghr: float = 0.0
    censor_time: float = 30.0

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < MIN_ROWS:
            raise ConfigValidationError(
                f"n must be an integer >= {MIN_ROWS}, got {self.n!r}", field="n"
            )
        if (
            isinstance(self.seed, bool)
            or not isinstance(self.seed, int)
            or not 0 <= self.seed < 2**64
        ):
            raise ConfigValidationError(
                f"seed must be an integer in [0, 2**64), got {self.seed!r}",
                field="seed",
            )
        if (
            isinstance(self.null_covariates, bool)
            or not isinstance(self.null_covariates, int)
            or self.null_covariates < 0
        ):
            raise ConfigValidationError(
                f"null_covariates must be a non-negative integer, "
                f"got {self.null_covariates!r}",
                field="null_covariates",
            )
        for name in ("baseline_hazard", "censor_time"):
            value = getattr(self, name)
            if (
                isinstance(value, bool)
                or not isinstance(value, (int, float))
                or not value > 0
            ):
                raise ConfigValidationError(
                    f"{name} must be positive, got {value!r}", field=name
                )
        names = self.covariate_names
        if len(set(names)) != len(names):
            raise ConfigValidationError(
                f"Covariate names must be unique, got {names}", field="confounders"
            )
        for name in names:
            if not name or name in RESERVED:
                raise ConfigValidationError(
                    f"Covariate name {name!r} is empty or reserved", field="confounders"
                )

    @property
    def covariate_names(self) -> List[str]:
        return [c.name for c in self.confounders] + [
            f"null{i}" for i in range(1, self.null_covariates + 1)
        ]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SynthSpec":
        """Build a spec from a parsed JSON object.

        Raises:
            ConfigValidationError: On unknown or missing keys or invalid values
        """
        unknown = sorted(set(data) - set(_SPEC_KEYS))
        if unknown:
            raise ConfigValidationError(
                f"Unknown synth spec key '{unknown[0]}'", field=unknown[0]
            )
        for key in ("n", "seed"):
            if key not in data:
                raise ConfigValidationError(f"Missing synth spec key '{key}'", field=key)
        values = dict(data)
        confounders = []
        for i, item in enumerate(values.pop("confounders", [])):
            try:
                confounders.append(Confounder(**item))
            except TypeError:
                raise ConfigValidationError(
                    f"Confounder {i} must have name, effect_on_exposure and "
                    "effect_on_hazard",
                    field=f"confounders.{i}",
                ) from None
        return cls(confounders=confounders, **values)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SynthSpec":
        return cls.from_mapping(JsonDocument.from_file(path).to_dict())

    def analysis_config(self, **options: Any) -> AnalysisConfig:
        """Analysis configuration for the generated columns."""
        return AnalysisConfig(
            exposure=EXPOSURE,
            time=TIME,
            event=EVENT,
            covariates=self.covariate_names,
            **options,
        )


def generate(spec: SynthSpec) -> Dataset:
    """Draw a dataset from ``spec``.

    Covariates are standard normal. Exposure is Bernoulli with log-odds
    sum(effect_on_exposure * x). Event times are exponential with hazard
    baseline_hazard * exp(exposure_loghr * exposure + sum(effect_on_hazard * x)),
    censored administratively at censor_time.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    names = spec.covariate_names
    x = rng.standard_normal((spec.n, len(names)))

    k = len(spec.confounders)
    exposure_effects = np.array([c.effect_on_exposure for c in spec.confounders])
    hazard_effects = np.array([c.effect_on_hazard for c in spec.confounders])
    confounding = x[:, :k]

    exposure = (rng.random(spec.n) < expit(confounding @ exposure_effects)).astype(float)
    rate = spec.baseline_hazard * np.exp(
        spec.exposure_loghr * exposure + confounding @ hazard_effects
    )
    event_time = rng.standard_exponential(spec.n) / rate
    event = (event_time <= spec.censor_time).astype(float)
    time = np.minimum(event_time, spec.censor_time)

    frame = pd.DataFrame({EXPOSURE: exposure, TIME: time, EVENT: event})
    for j, name in enumerate(names):
        frame[name] = x[:, j]
    logger.info(
        "Generated %d rows: %d exposed, %d events",
        spec.n,
        int(exposure.sum()),
        int(event.sum()),
    )
    return Dataset(frame=frame)
