"""Tests for the transfer-matrix cocycle and its audits."""

import math
from fractions import Fraction

import numpy as np
import pytest

from app.arith.cf_arith import PhaseSpec
from app.core.errors import HypothesisViolated, PreconditionViolated
from app.operator.cocycle import (
    OperatorParams,
    SiteFunction,
    lyapunov,
    propagate,
    propagation_audit,
    shift_cap,
    shift_difference,
    shift_residual,
    solve_recursion,
    step_matrix,
    telescoping_bound,
    transfer,
    window_growth,
)


def test_free_operator_has_no_log_lambda(golden):
    """Test that λ = 0 is accepted but L is undefined."""
    params = OperatorParams(0.0, golden, PhaseSpec(0, Fraction(0)), 0.0)
    with pytest.raises(PreconditionViolated):
        params.L


def test_single_step_transfer(params):
    """Test that A_1(θ) is the one-step matrix."""
    product = transfer(params, 1)
    assert np.allclose(product.matrix.to_array(), step_matrix(params, 0.0))
    assert transfer(params, 0).matrix.log_norm() == pytest.approx(0.0)


def test_negative_transfer_inverts(params):
    """Test A_{−k}(θ + kα) A_k(θ) = I."""
    forward = transfer(params, 3).matrix
    backward = transfer(params, -3, start=3).matrix
    assert np.allclose((backward @ forward).to_array(), np.eye(2), atol=1e-8)


def test_lyapunov_free_rotation(golden):
    """Test that λ = 0, E = 0 gives a rotation cocycle with zero exponent."""
    params = OperatorParams(0.0, golden, PhaseSpec(0, Fraction(0)), 0.0)
    estimate = lyapunov(params, 200, 8)
    assert abs(estimate.mean) < 1e-12
    assert len(estimate.per_theta) == 8


def test_lyapunov_lower_bound(params, ln4):
    """Test that the phase-averaged growth is not below ln|λ|."""
    estimate = lyapunov(params, 500, 64)
    assert estimate.mean >= ln4 - 0.1


def test_lyapunov_at_given_phases(params):
    """Test that explicit phases replace the midpoint grid."""
    midpoints = (np.arange(4) + 0.5) / 4
    assert lyapunov(params, 50, 4, midpoints).mean == lyapunov(params, 50, 4).mean
    drawn = lyapunov(params, 50, 4, [0.1, 0.2, 0.7, 0.9])
    assert [row["theta"] for row in drawn.per_theta] == [0.1, 0.2, 0.7, 0.9]
    with pytest.raises(PreconditionViolated):
        lyapunov(params, 50, 4, [0.1, 0.2])


def test_solve_recursion_matches_propagate(params):
    """Test that the recursion and the transfer product agree."""
    phi = solve_recursion(params, 1.0, 0.5, -3, 12)
    top, bottom = propagate(params, (1.0, 0.5), 0, 10)
    assert top.to_real() == pytest.approx(phi.value(10).to_real(), rel=1e-6)
    assert bottom.to_real() == pytest.approx(phi.value(9).to_real(), rel=1e-6)


def test_propagation_audit_on_solution(params):
    """Test the growth bound along a true solution with a generous epsilon."""
    phi = solve_recursion(params, 1.0, 0.0, -40, 40)
    result = propagation_audit(params, phi, 20, 0, 1.0)
    assert result["measured_log"] <= result["bound_log"]
    assert result["pass"]


def test_site_function_views():
    """Test sign/log storage, normalization and re-centering."""
    phi = SiteFunction.from_values(-1, [0.5, 1.0, -0.25])
    assert phi.stop == 1
    assert phi.value(0).to_real() == pytest.approx(1.0)
    assert phi.log_abs(1) == pytest.approx(math.log(0.25))
    normalized = phi.normalized_at(1)
    assert normalized.value(1).to_real() == pytest.approx(1.0)
    assert normalized.value(0).sign == -1
    moved = phi.recentered(1)
    assert moved.start == -2
    assert moved.value(0).to_real() == pytest.approx(-0.25)
    assert phi.window_max_log(-1, 1) == pytest.approx(0.0)
    with pytest.raises(IndexError):
        phi.value(2)


def test_shift_residual_sign(golden):
    """Test q_nα − p_n alternates in sign."""
    assert shift_residual(golden, 4) > 0
    assert shift_residual(golden, 5) < 0
    assert float(abs(shift_residual(golden, 5))) == pytest.approx(abs(8 * golden.alpha_float - 5), rel=1e-9)


def test_shift_difference_trivial_shift(params):
    """Test that j = 0 passes exactly."""
    audit = shift_difference(params, 8, 0, 5, 0.05)
    assert audit.passed
    assert audit.mode == "exact"


def test_shift_difference_preconditions(params, golden):
    """Test the admissible k and j ranges."""
    with pytest.raises(PreconditionViolated):
        shift_difference(params, 0, 1, 5, 0.05)
    with pytest.raises(PreconditionViolated):
        shift_difference(params, 8, shift_cap(golden, 5) + 1, 5, 0.05)


def test_window_growth():
    """Test windowed growth of identity products."""
    eye = [np.eye(2)] * 4
    assert window_growth(eye, 0.0) == pytest.approx(0.0)
    assert window_growth(eye, 1.0) == pytest.approx(-1.0)
    doubling = [2 * np.eye(2)] * 3
    assert window_growth(doubling, 0.0) == pytest.approx(3 * math.log(2))


def test_telescoping_without_perturbation():
    """Test that a zero perturbation gives a zero difference."""
    eye = [np.eye(2)] * 3
    audit = telescoping_bound(eye, [np.zeros((2, 2))] * 3, 1.0, 0.0)
    assert audit.passed
    assert audit.lhs.is_zero()


def test_telescoping_small_perturbation():
    """Test the bound for a small perturbation of rotations."""
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    A = [rotation] * 6
    B = [1e-3 * np.eye(2)] * 6
    audit = telescoping_bound(A, B, 1.0 + 1e-9, 0.0)
    assert audit.passed
    assert audit.lhs.log_abs <= audit.rhs.log_abs


def test_telescoping_hypothesis_violated():
    """Test that window growth above De^{dj} is rejected."""
    A = [2 * np.eye(2)] * 3
    with pytest.raises(HypothesisViolated):
        telescoping_bound(A, [np.zeros((2, 2))] * 3, 1.0, 0.0)
    with pytest.raises(PreconditionViolated):
        telescoping_bound(A, A[:2], 1.0, 0.0)
