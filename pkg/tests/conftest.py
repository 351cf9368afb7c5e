"""Shared fixtures; puts the flat module directory on sys.path."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "timechange-lab"))

# pylint: disable=wrong-import-position
from coefficients import build_model  # noqa: E402
from paths import BrownianMotion, Ctmc, RcllPath  # noqa: E402

SCENARIOS = ROOT / "scenarios"


@pytest.fixture
def unit_model():
    """H = 1, sigma_tilde = 1, t0 = 1."""
    return build_model({"kind": "constant", "value": 1.0}, {"kind": "constant", "value": 1.0}, 1.0)


@pytest.fixture
def linear_clock_model():
    """H = 1, sigma_tilde = 1 + t, t0 = 1."""
    return build_model({"kind": "constant", "value": 1.0}, {"kind": "linear_t", "intercept": 1.0, "slope": 1.0}, 1.0)


@pytest.fixture
def brownian():
    return BrownianMotion(0.0)


@pytest.fixture
def absorbing_chain():
    """Three states, the last one absorbing."""
    return Ctmc((0.0, 1.0, 2.0), np.array([[-1.0, 1.0, 0.0], [0.5, -1.0, 0.5], [0.0, 0.0, 0.0]]), 0)


@pytest.fixture
def step_path():
    """2 on [0, 1), 5 on [1, 3]."""
    return RcllPath(np.array([0.0, 1.0]), np.array([2.0, 5.0]), 3.0)


@pytest.fixture
def scenario_data():
    """Loader for the bundled scenario documents."""

    def _load(name: str) -> dict:
        with open(SCENARIOS / f"{name}.json", encoding="utf-8") as f:
            return json.load(f)

    return _load
