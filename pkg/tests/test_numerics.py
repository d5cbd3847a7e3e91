"""Tests for extended-range scalars, matrices and backends."""

import math

import numpy as np
import pytest

from app.arith.backends import get_backend, is_mp
from app.arith.numerics import LogScalar, ScaledMatrix2, log_add, log_sum


def test_log_scalar_real_roundtrip():
    """Test conversion to and from binary64."""
    x = LogScalar.from_real(-2.5)
    assert x.sign == -1
    assert x.to_real() == pytest.approx(-2.5)
    assert LogScalar.from_real(0).is_zero()
    assert LogScalar.zero().log_abs == -math.inf


def test_log_scalar_arithmetic():
    """Test signed sums, products and quotients."""
    a, b = LogScalar.from_real(3.0), LogScalar.from_real(-1.0)
    assert (a + b).to_real() == pytest.approx(2.0)
    assert (b - a).to_real() == pytest.approx(-4.0)
    assert (a * b).to_real() == pytest.approx(-3.0)
    assert (a / b).to_real() == pytest.approx(-3.0)
    assert log_sum([LogScalar.from_real(v) for v in (1.0, 2.0, 3.0)]).to_real() == pytest.approx(6.0)
    with pytest.raises(ZeroDivisionError):
        a / LogScalar.zero()


def test_exact_cancellation_is_flagged():
    """Test that x + (−x) is zero and carries the cancellation flag."""
    total = log_add(LogScalar.from_real(3.0), LogScalar.from_real(-3.0))
    assert total.is_zero()
    assert total.cancelled


def test_beyond_binary64_range():
    """Test magnitudes far outside the binary64 range."""
    big = LogScalar.from_log(1000.0) * LogScalar.from_log(1000.0)
    assert big.log_abs == pytest.approx(2000.0)
    with pytest.raises(OverflowError):
        big.to_real()
    assert (big / LogScalar.from_log(1999.0)).to_real() == pytest.approx(math.e)


def test_log_scalar_ordering():
    """Test comparisons by value across signs."""
    assert LogScalar.from_real(-5.0) < LogScalar.from_real(-1.0)
    assert LogScalar.from_real(-1.0) < LogScalar.zero()
    assert LogScalar.zero() < LogScalar.one()
    assert LogScalar.from_log(10.0) > LogScalar.from_log(9.0)


def test_log_scalar_json():
    """Test the {sign, log} encoding."""
    assert LogScalar.zero().to_json() == {"sign": 0, "log": None}
    data = LogScalar.from_real(-math.e).to_json()
    assert data["sign"] == -1
    assert data["log"] == pytest.approx(1.0)
    assert LogScalar.from_json(data).to_real() == pytest.approx(-math.e)


def test_mp_values_keep_backend():
    """Test that mpmath inputs stay in the high-precision backend."""
    ctx = get_backend("mp").ctx
    x = LogScalar.from_real(ctx.mpf(10) ** 500)
    assert is_mp(x.logmag)
    assert x.log_abs == pytest.approx(500 * math.log(10))


def test_scaled_matrix_norm_and_det():
    """Test spectral norm and determinant from normalized entries."""
    m = ScaledMatrix2.from_array([[2.0, 1.0], [1.0, 1.0]])
    assert m.log_det() == pytest.approx(0.0, abs=1e-14)
    expected = math.log(np.linalg.norm(np.array([[2.0, 1.0], [1.0, 1.0]]), 2))
    assert m.log_norm() == pytest.approx(expected)
    assert ScaledMatrix2.identity().log_norm() == pytest.approx(0.0)
    assert ScaledMatrix2.zero().log_norm() == -math.inf


def test_scaled_matrix_products_do_not_overflow():
    """Test products whose entries exceed the binary64 range."""
    m = ScaledMatrix2.from_array([[1e200, 0.0], [0.0, 1.0]])
    product = m @ m @ m
    assert product.log_norm() == pytest.approx(600 * math.log(10), rel=1e-12)
    assert product.entry(0, 0).log_abs == pytest.approx(600 * math.log(10), rel=1e-12)
    assert product.entry(0, 1).is_zero()


def test_scaled_matrix_inverse_and_difference():
    """Test inverse, subtraction and conversion back to arrays."""
    array = np.array([[3.0, -1.0], [1.0, 0.0]])
    m = ScaledMatrix2.from_array(array)
    assert np.allclose(m.to_array(), array)
    assert np.allclose((m @ m.inverse()).to_array(), np.eye(2))
    assert np.allclose((m @ m.inverse(unimodular=True)).to_array(), np.eye(2))
    assert (m - m).is_zero()
    assert np.allclose((m + m).to_array(), 2 * array)


def test_scaled_matrix_apply():
    """Test the matrix-vector product on LogScalars."""
    m = ScaledMatrix2.from_array([[1.0, 2.0], [3.0, 4.0]])
    top, bottom = m.apply((LogScalar.one(), LogScalar.from_real(-1.0)))
    assert top.to_real() == pytest.approx(-1.0)
    assert bottom.to_real() == pytest.approx(-1.0)
