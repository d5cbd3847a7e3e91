"""Pytest configuration and fixtures."""

import math

import numpy as np
import pytest

from app.arith.cf_arith import Frequency, PhaseSpec
from app.operator.cocycle import OperatorParams, SiteFunction


@pytest.fixture
def golden():
    """Golden-mean frequency (all partial quotients 1)."""
    return Frequency.golden()


@pytest.fixture
def params(golden):
    """Supercritical operator at θ = 0 and an energy off the potential's range ends."""
    return OperatorParams(lam=4.0, freq=golden, theta=PhaseSpec(0, 0), energy=0.3)


@pytest.fixture
def local_solution(params):
    """Factory for a solution of Hφ = Eφ on [lo, hi], built by the three-term recursion."""

    def build(lo: int, hi: int) -> SiteFunction:
        v = params.site_potential(np.arange(lo, hi + 1))
        values = np.zeros(hi - lo + 1)
        values[0], values[1] = 0.7, 1.0
        for i in range(1, len(values) - 1):
            values[i + 1] = (params.energy - v[i]) * values[i] - values[i - 1]
        return SiteFunction.from_values(lo, values)

    return build


@pytest.fixture
def exponential_profile():
    """φ(k) = e^{−|k|} on [−50, 50]."""
    sites = np.arange(-50, 51)
    return SiteFunction.from_values(-50, np.exp(-np.abs(sites).astype(np.float64)))


@pytest.fixture
def delta_function():
    """φ = δ_0 on [−100, 100]."""
    values = np.zeros(201)
    values[100] = 1.0
    return SiteFunction.from_values(-100, values)


@pytest.fixture
def run_config_file(tmp_path):
    """Factory writing a flat key=value run configuration."""

    def write(text: str):
        path = tmp_path / "run.env"
        path.write_text(text)
        return str(path)

    return write


@pytest.fixture
def ln4():
    return math.log(4.0)
