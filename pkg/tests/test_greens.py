"""Tests for restriction determinants and Green's-function edge entries."""

import math
from fractions import Fraction

import numpy as np
import pytest

from app.arith.cf_arith import PhaseSpec
from app.core.errors import NotAnEigenfunctionLocally, NotCompletelyResonant, PreconditionViolated, Singular
from app.operator.cocycle import OperatorParams, SiteFunction
from app.operator.greens import (
    block_expansion_bound,
    block_identity_residual,
    block_terms,
    box_det,
    box_profile,
    green_edge_entries,
    klem2_audit,
    numerator_bound_audit,
    transfer_identity_residual,
)


def _box_hamiltonian(params, x1, x2):
    v = params.site_potential(np.arange(x1, x2 + 1))
    n = len(v)
    return np.diag(v) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)


def test_single_site_determinant(params):
    """Test P on one site is E − v(θ)."""
    det = box_det(params, (0, 0))
    assert det.value.to_real() == pytest.approx(0.3 - 8.0)
    assert det.cross_check < 1e-12


def test_determinant_matches_dense(params):
    """Test the recursion against a dense determinant."""
    H = _box_hamiltonian(params, -3, 5)
    dense = np.linalg.det(params.energy * np.eye(len(H)) - H)
    det = box_det(params, (-3, 5))
    assert det.value.to_real() == pytest.approx(dense, rel=1e-9)


def test_mp_determinant_matches_binary64(params):
    """Test the high-precision path on a short box."""
    fast = box_det(params, (0, 9), mode="binary64").value
    slow = box_det(params, (0, 9), mode="mp").value
    assert slow.sign == fast.sign
    assert slow.log_abs == pytest.approx(fast.log_abs, rel=1e-10)


def test_empty_box_is_one(params):
    """Test that empty sub-boxes have determinant 1."""
    profile = box_profile(params, (0, 3))
    assert profile.left(0).to_real() == 1.0
    assert profile.right(3).to_real() == 1.0
    with pytest.raises(PreconditionViolated):
        box_det(params, (3, 2))


def test_green_entries_match_resolvent(params):
    """Test G(x1, y) and G(y, x2) against the dense resolvent of H − E."""
    x1, x2, y = 0, 5, 2
    H = _box_hamiltonian(params, x1, x2)
    G = np.linalg.inv(H - params.energy * np.eye(len(H)))
    block = green_edge_entries(params, (x1, x2), y)
    assert block.g_left.to_real() == pytest.approx(G[0, y - x1], rel=1e-9)
    assert block.g_right.to_real() == pytest.approx(G[y - x1, x2 - x1], rel=1e-9)


def test_singular_box(params):
    """Test that E in the restricted spectrum raises Singular."""
    at_peak = params.with_energy(8.0)
    with pytest.raises(Singular):
        green_edge_entries(at_peak, (0, 0), 0)
    with pytest.raises(PreconditionViolated):
        green_edge_entries(params, (0, 3), 7)


def test_transfer_identity(params):
    """Test A_k written through restriction determinants."""
    assert transfer_identity_residual(params, 10) < 1e-8
    assert transfer_identity_residual(params, 7, start=3) < 1e-8


def test_block_identity_on_local_solution(params, local_solution):
    """Test φ(y) + G(x1,y)φ(x1−1) + G(y,x2)φ(x2+1) = 0."""
    phi = local_solution(-1, 8)
    center, left, right = block_terms(params, phi, (0, 6), 3)
    scale = max(center.log_abs, left.log_abs, right.log_abs)
    residual = block_identity_residual(params, phi, (0, 6), 3)
    assert residual.is_zero() or residual.log_abs - scale < math.log(1e-9)

    expansion = block_expansion_bound(params, phi, (0, 6), 3)
    assert expansion["pass"]


def test_block_identity_rejects_non_solutions(params):
    """Test that samples violating the eigen-equation are rejected."""
    phi = SiteFunction.from_values(-1, np.linspace(1.0, 2.0, 10))
    with pytest.raises(NotAnEigenfunctionLocally):
        block_identity_residual(params, phi, (0, 6), 3)
    with pytest.raises(PreconditionViolated):
        block_identity_residual(params, phi, (0, 8), 3)


def test_numerator_bound_exempts_short_intervals(params):
    """Test that intervals below the minimum length are exempt."""
    result = numerator_bound_audit(params, (0, 4), 0.05)
    assert result["exempt"]
    assert result["pass"] is None


def test_numerator_bound_long_interval(params):
    """Test the numerator bound on an interval above the minimum length."""
    result = numerator_bound_audit(params, (0, 29), 0.05, min_length=20)
    assert not result["exempt"]
    assert result["bound_log"] == pytest.approx((math.log(4.0) + 0.05) * 29)


def test_klem2_half_boxes(params):
    """Test the half-period determinant bounds, which hold for any phase at this size."""
    records = klem2_audit(params, 0, 17, 34, 8, 0.05, C=10.0)
    assert [r.name for r in records] == ["left_half", "mirrored_half", "full"]
    assert records[0].passed
    assert records[1].passed
    assert records[0].interval == (0, 17)


def test_klem2_requires_resonant_phase(params):
    """Test that klem2 needs a completely resonant θ."""
    off = params.with_theta(PhaseSpec(0, Fraction(1, 2)))
    with pytest.raises(NotCompletelyResonant):
        klem2_audit(off, 0, 17, 34, 8, 0.05)


def _random_draws(golden, count=40, seed=20240611):
    """(params, x1, x2, y) with θ, E and the interval drawn at random."""
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(count):
        theta = PhaseSpec.from_real(float(rng.random()))
        energy = float(rng.uniform(-6.0, 6.0))
        x1 = int(rng.integers(-20, 11))
        x2 = x1 + int(rng.integers(0, 12))
        y = int(rng.integers(x1, x2 + 1))
        draws.append((OperatorParams(2.0, golden, theta, energy), x1, x2, y))
    return draws


def _recursion_solution(params, lo, hi):
    v = params.site_potential(np.arange(lo, hi + 1))
    values = np.zeros(hi - lo + 1)
    values[0], values[1] = 0.4, 1.0
    for i in range(1, len(values) - 1):
        values[i + 1] = (params.energy - v[i]) * values[i] - values[i - 1]
    return SiteFunction.from_values(lo, values)


def test_transfer_identity_on_random_draws(golden):
    """Test A_k against its determinant form over random phases, energies and lengths."""
    for params, x1, x2, _ in _random_draws(golden):
        k = x2 - x1 + 1
        assert transfer_identity_residual(params, k, start=x1) < 1e-6


def test_green_entries_on_random_draws(golden):
    """Test Cramer's-rule edge entries against the dense inverse over random draws."""
    for params, x1, x2, y in _random_draws(golden):
        H = _box_hamiltonian(params, x1, x2)
        G = np.linalg.inv(H - params.energy * np.eye(len(H)))
        scale = float(np.max(np.abs(G)))
        block = green_edge_entries(params, (x1, x2), y)
        assert abs(block.g_left.to_real() - G[0, y - x1]) <= 1e-8 * scale
        assert abs(block.g_right.to_real() - G[y - x1, x2 - x1]) <= 1e-8 * scale


def test_block_identity_on_random_draws(golden):
    """Test φ(y) + G(x1,y)φ(x1−1) + G(y,x2)φ(x2+1) = 0 for local solutions over random draws."""
    for params, x1, x2, y in _random_draws(golden):
        phi = _recursion_solution(params, x1 - 1, x2 + 1)
        center, left, right = block_terms(params, phi, (x1, x2), y)
        scale = abs(center.to_real()) + abs(left.to_real()) + abs(right.to_real())
        assert block_identity_residual(params, phi, (x1, x2), y).to_real() <= 1e-8 * scale
