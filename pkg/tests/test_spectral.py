"""Tests for truncations, eigenpairs, decay fits and spectrum sampling."""

import math
from fractions import Fraction

import numpy as np
import pytest

from app.arith.cf_arith import PhaseSpec
from app.core.errors import PreconditionViolated, WindowTooSmall
from app.operator.cocycle import SiteFunction
from app.operator.spectral import (
    TridiagonalOperator,
    decay_rate,
    dedup,
    eigenpairs,
    filtered_pairs,
    generalized_eigenfunction,
    hausdorff,
    localized_states,
    spectrum_sample,
)


def test_truncation_shape(golden):
    """Test the Dirichlet truncation on [−N, N]."""
    op = TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 10)
    assert op.size == 21
    assert op.sites[0] == -10
    assert op.diagonal[10] == pytest.approx(8.0)
    dense = op.dense()
    assert np.allclose(dense, dense.T)
    vec = np.arange(21, dtype=np.float64)
    assert np.allclose(op.apply(vec), dense @ vec)
    with pytest.raises(PreconditionViolated):
        TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 0)


def test_eigenpairs_residuals(golden):
    """Test that every eigenpair solves the truncated equation."""
    op = TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 20)
    pairs = eigenpairs(op)
    assert len(pairs) == 41
    assert max(p.residual for p in pairs) < 1e-10 * op.norm_bound
    energies = [p.energy for p in pairs]
    assert energies == sorted(energies)
    assert np.allclose(energies, np.linalg.eigvalsh(op.dense()))


def test_eigenpairs_window(golden):
    """Test selecting eigenpairs by energy window."""
    op = TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 20)
    everything = eigenpairs(op)
    inside = eigenpairs(op, window=(-1.0, 1.0))
    assert len(inside) == sum(-1.0 < p.energy <= 1.0 for p in everything)
    assert eigenpairs(op, window=(1.0, 1.0)) == []


def test_localized_states_are_recentered(golden):
    """Test boundary filtering, re-centering and normalization."""
    op = TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 100)
    states = localized_states(op, 3)
    assert len(states) == 3
    for state in states:
        assert state.phi.value(0).to_real() == pytest.approx(1.0)
        assert state.params.theta == PhaseSpec(0, Fraction(0)).shifted(state.center)
        assert state.pair.boundary_mass < 1e-8
    assert len(filtered_pairs(eigenpairs(op))) >= 3


def test_localized_states_come_from_mid_spectrum(golden):
    """Test that the selected states are the filtered eigenpairs nearest the median energy."""
    op = TridiagonalOperator(4.0, golden, PhaseSpec(0, Fraction(0)), 100)
    energies = np.array([p.energy for p in filtered_pairs(eigenpairs(op))])
    middle = np.median(energies)
    states = localized_states(op, 4)
    picked = [state.pair.energy for state in states]
    assert picked == sorted(picked)
    farthest = max(abs(e - middle) for e in picked)
    outside = [e for e in energies if e not in picked]
    assert all(abs(e - middle) >= farthest for e in outside)


def test_generalized_eigenfunction_requires_energy_near_spectrum(params):
    """Test that an energy away from the sampled spectrum is rejected."""
    with pytest.raises(PreconditionViolated) as exc:
        generalized_eigenfunction(params, 10, spectrum=[params.energy + 1e-3, -1.0])
    assert exc.value.context["gap"] == pytest.approx(1e-3)
    with pytest.raises(PreconditionViolated):
        generalized_eigenfunction(params, 10, spectrum=[])


def test_decay_rate_of_exponential(exponential_profile):
    """Test the fitted rate of e^{−|k|}."""
    fit = decay_rate(exponential_profile, lam=math.e)
    assert fit.rate == pytest.approx(-1.0, abs=1e-9)
    assert fit.rate_left == pytest.approx(-1.0, abs=1e-9)
    assert fit.theorem_bound == pytest.approx(-1.0)
    assert fit.satisfied is True
    assert fit.fit_window == (5, 44)


def test_decay_rate_out_of_regime(exponential_profile):
    """Test that L ≤ 2β leaves the comparison undecided."""
    fit = decay_rate(exponential_profile, lam=2.0, beta=1.0)
    assert fit.out_of_regime
    assert fit.satisfied is None


def test_decay_rate_window_too_small():
    """Test that short functions cannot be fitted."""
    phi = SiteFunction.from_values(-2, [0.1, 0.5, 1.0, 0.5, 0.1])
    with pytest.raises(WindowTooSmall):
        decay_rate(phi)


def test_dedup_and_hausdorff():
    """Test merging of close energies and the Hausdorff distance."""
    assert dedup([1.0, 0.0, 1e-8], 1e-6) == [0.0, 1.0]
    assert hausdorff([0.0, 1.0], [0.0, 2.0]) == pytest.approx(1.0)
    assert hausdorff([0.0, 1.0], [0.0, 1.0]) == 0.0


def test_spectrum_sample(golden):
    """Test the union of truncation spectra over a phase grid."""
    sample = spectrum_sample(4.0, golden, [0.0, 0.25, 0.5, 0.75], 10, workers=2)
    assert sample.N == 10
    assert sample.energies == sorted(sample.energies)
    assert len(sample.energies) <= 4 * 21
    assert max(abs(e) for e in sample.energies) <= 2.0 + 8.0
    assert sample.hausdorff is not None
    with pytest.raises(PreconditionViolated):
        spectrum_sample(4.0, golden, [], 10)
