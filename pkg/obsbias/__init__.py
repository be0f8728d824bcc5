"""obsbias - E-values and Observed Covariate E-values for observational studies.

Fits a propensity model and an overlap-weighted Cox model, refits it with
each covariate (or named group) left out, and summarizes how far the
limiting confidence bound moves as an Observed Covariate E-value. Results
are drawn as a two-panel observed bias plot next to the tipping-point
strength of a hypothetical unmeasured confounder.

Example:
    >>> from obsbias import evalue, EffectEstimate
    >>> values = evalue(EffectEstimate(3.9, 1.8, 8.7))
    >>> round(values.point, 2), round(values.ci, 2)
    (7.26, 3.0)
"""

__version__ = "1.0.0"

from obsbias.evalue import (  # noqa: E402
    EffectEstimate,
    EValues,
    Scale,
    TipParameters,
    evalue,
    lin_adjust,
    observed_covariate_evalue,
    tip_rr_ud,
)
from obsbias.exceptions import FitError, ObsBiasError  # noqa: E402
from obsbias.io_store import Dataset, read_csv, read_results, write_results  # noqa: E402
from obsbias.pipeline import (  # noqa: E402
    AnalysisConfig,
    ObservedBiasRecord,
    analyze,
    run_observed_bias,
)
from obsbias.plotting import PlotTheme, love_plot, observed_bias_plot  # noqa: E402

__all__ = [
    "AnalysisConfig",
    "Dataset",
    "EValues",
    "EffectEstimate",
    "FitError",
    "ObsBiasError",
    "ObservedBiasRecord",
    "PlotTheme",
    "Scale",
    "TipParameters",
    "analyze",
    "evalue",
    "lin_adjust",
    "love_plot",
    "observed_bias_plot",
    "observed_covariate_evalue",
    "read_csv",
    "read_results",
    "run_observed_bias",
    "tip_rr_ud",
    "write_results",
]
