"""Shared fixtures for the obsbias test suite."""

import json

import pytest

from obsbias.pipeline import (
    FULL_LABEL,
    KIND_COVARIATE,
    KIND_FULL,
    KIND_GROUP,
    KIND_TIP,
    TIP_LB_LABEL,
    ObservedBiasRecord,
)
from obsbias.synth import Confounder, SynthSpec, generate


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON object under tmp_path and return its path."""

    def _write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def write_text(tmp_path):
    """Write text under tmp_path and return its path."""

    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8", newline="")
        return path

    return _write


@pytest.fixture(scope="session")
def confounded_spec():
    """One strong confounder plus one covariate unrelated to anything."""
    return SynthSpec(
        n=2000,
        seed=20240607,
        confounders=[Confounder("x1", effect_on_exposure=1.0, effect_on_hazard=1.0)],
        null_covariates=1,
        baseline_hazard=0.02,
    )


@pytest.fixture(scope="session")
def confounded_data(confounded_spec):
    return generate(confounded_spec)


@pytest.fixture
def full_record():
    return ObservedBiasRecord(FULL_LABEL, KIND_FULL, 1.24, 1.11, 1.37)


@pytest.fixture
def sample_records():
    """A small ordered record list covering every plotted kind."""
    return [
        ObservedBiasRecord(
            TIP_LB_LABEL, KIND_TIP, 1.24 / 1.11, 1.0, 1.37 / 1.11, oce=1.359
        ),
        ObservedBiasRecord("dnr1", KIND_COVARIATE, 1.12, 1.00, 1.23, oce=1.359),
        ObservedBiasRecord("labs", KIND_GROUP, 1.20, 1.08, 1.34, oce=1.12),
        ObservedBiasRecord("age", KIND_COVARIATE, 1.25, 1.12, 1.38, oce=1.05),
    ]
