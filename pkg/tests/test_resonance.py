"""Tests for Lagrange terms, node schemes, resonant amplitudes, contractions and certificates."""

import math
from fractions import Fraction

import numpy as np
import pytest

from app.arith.cf_arith import PhaseSpec
from app.core.errors import (
    DegenerateDenominator,
    DegenerateNodes,
    InsufficientProfiles,
    PreconditionViolated,
    RangeExceeded,
    ScaleTooSmall,
    SiteTooResonant,
)
from app.operator.cocycle import SiteFunction
from app.resonance.amplitudes import (
    ResonanceProfile,
    half_index,
    half_j_range,
    offdiag_decay_check,
    offdiag_decay_sweep,
    resonance_amplitudes,
    resonance_distance,
    resonant_site,
)
from app.resonance.certificate import (
    closed_form_log_bound,
    decay_certificate,
    iterate_bounds,
    trivial_log_bound,
)
from app.resonance.contraction import contraction_exponent, full_site_contraction, half_site_contraction
from app.resonance.lagrange import cosine_nodes, lagrange_terms, uniform_witness
from app.resonance.schemes import build_scheme, scheme_sandwich, sine_minima_audit
from app.schemas.run_config import RunConfig
from app.services.localization_service import LocalizationService


def _profile(values, n=8, q_n=34, q_next=55, epsilon=0.01):
    return ResonanceProfile.from_values(n, q_n, q_next, epsilon, values)


# Lagrange terms


def test_two_node_lagrange_terms():
    """Test the closed form for two nodes."""
    c1, c2 = math.cos(0.2 * math.pi), math.cos(0.6 * math.pi)
    terms = lagrange_terms([0.1, 0.3])
    assert terms.method == "critical-points"
    assert terms.values[0] == pytest.approx(math.log((1 + abs(c2)) / abs(c1 - c2)))
    assert terms.values[1] == pytest.approx(math.log((1 + abs(c1)) / abs(c1 - c2)))


def test_single_node_is_empty_product():
    """Test that one node gives Lag = 0."""
    terms = lagrange_terms([0.2])
    assert terms.values.tolist() == [0.0]
    assert terms.method == "empty-product"


def test_coincident_nodes_rejected():
    """Test that equal cosines are rejected."""
    with pytest.raises(DegenerateNodes):
        cosine_nodes([0.25, 0.25])
    with pytest.raises(PreconditionViolated):
        lagrange_terms([])


def test_grid_agrees_with_critical_points():
    """Test the grid maximizer against exact critical points."""
    thetas = [0.05, 0.21, 0.33, 0.47]
    exact = lagrange_terms(thetas)
    grid = lagrange_terms(thetas, exact_max_nodes=2, grid_points=2001)
    assert grid.method.startswith("grid-2001")
    assert np.allclose(grid.values, exact.values, atol=1e-7)


def test_uniform_witness_reports_best_margin(params):
    """Test that the witness scans every node."""
    phases = [0.0, 0.13, 0.37, 0.61]
    witness = uniform_witness(params, phases)
    assert witness.k == 3
    assert len(witness.per_m) == 4
    best = max(row["margin"] for row in witness.per_m)
    assert witness.lhs - witness.rhs == pytest.approx(best)
    assert witness.passed == (best >= 0)
    with pytest.raises(PreconditionViolated):
        uniform_witness(params, [0.1])


# Schemes


def test_half_scheme_at_n18(golden):
    """Test the half-site scheme at q_n = 4181."""
    scheme = build_scheme(golden, 18, 0, "half", 0.05)
    assert scheme.n0 == 16
    assert scheme.q_sub == 2
    assert scheme.s == 52
    assert scheme.k == 623
    assert scheme.I1 == (-208, -1)
    assert scheme.I2 == (1882, 2297)
    assert not scheme.clamped
    assert scheme_sandwich(scheme)


def test_scheme_clamps_small_scales(golden):
    """Test that small scales either raise or clamp to q_0."""
    with pytest.raises(ScaleTooSmall):
        build_scheme(golden, 8, 1, "full", 0.05)
    scheme = build_scheme(golden, 8, 1, "full", 0.05, allow_clamp=True)
    assert scheme.clamped
    assert scheme.q_sub == 1
    assert scheme.s == 5
    assert scheme.I2 == (24, 43)


def test_scheme_preconditions(golden):
    """Test rejected scheme arguments."""
    with pytest.raises(PreconditionViolated):
        build_scheme(golden, 18, 0, "full", 0.05)
    with pytest.raises(PreconditionViolated):
        build_scheme(golden, 18, 0, "middle", 0.05)
    with pytest.raises(PreconditionViolated):
        build_scheme(golden, 18, 0, "half", 0.07)


def test_sine_minima_audit_shape(golden):
    """Test one record per node with the expected groups."""
    scheme = build_scheme(golden, 8, 1, "full", 0.05, allow_clamp=True)
    audit = sine_minima_audit(scheme, golden, PhaseSpec(0, Fraction(0)))
    assert len(audit.records) == len(scheme.sites())
    assert {r.group for r in audit.records} <= {"I1+left", "right"}
    assert 0.0 <= audit.pass_rate <= 1.0
    assert audit.to_json()["scheme"]["clamped"] is True


# Amplitudes


def test_resonant_sites():
    """Test integer and half-integer resonant sites."""
    assert resonant_site(2, 34) == 68
    assert resonant_site(Fraction(1, 2), 34) == 17
    assert resonant_site(Fraction(-3, 2), 34) == -51
    assert half_index(0.5) == Fraction(1, 2)
    with pytest.raises(PreconditionViolated):
        half_index(Fraction(1, 3))
    assert half_j_range(1) == [Fraction(-1), Fraction(-1, 2), Fraction(0), Fraction(1, 2), Fraction(1)]
    assert resonance_distance(20, 34) == 3


def test_delta_function_profile(golden, delta_function):
    """Test that φ = δ_0 has r_0 = 1 and all other amplitudes zero."""
    profile = resonance_amplitudes(delta_function, golden, 8, 0.01, half_j_range(2))
    assert profile.q_n == 34
    assert profile.log_r(0) == 0.0
    assert all(math.isinf(v) for t, v in profile.amplitudes.items() if t != 0)
    assert profile.to_json()["log_r"]["1/2"] is None
    with pytest.raises(RangeExceeded):
        profile.log_r(3)


def test_amplitude_window_outside_range(golden, delta_function):
    """Test that windows beyond the sampled range are rejected."""
    with pytest.raises(RangeExceeded):
        resonance_amplitudes(delta_function, golden, 8, 0.01, [3])


def test_offdiag_sweep_on_delta(golden, delta_function, ln4):
    """Test the off-resonance bound on φ = δ_0."""
    profile = resonance_amplitudes(delta_function, golden, 8, 0.01, half_j_range(2))
    sweep = offdiag_decay_sweep(delta_function, profile, ln4, range(-60, 61))
    assert sweep.checked > 0
    assert sweep.skipped > 0
    assert not sweep.failures
    with pytest.raises(SiteTooResonant):
        offdiag_decay_check(delta_function, profile, 17, ln4)


# Contractions


def test_half_contraction_with_vanishing_numerator(ln4):
    """Test that r_{j+1/2} = 0 passes."""
    profile = _profile({0: 1.0, 0.5: 0.0, 1: 0.5})
    result = half_site_contraction(profile, 0, ln4, C=10.0, epsilon=0.01)
    assert result.passed
    assert result.log_ratio == -math.inf
    assert result.ratio == 0.0
    assert result.to_json()["log_ratio"] is None


def test_half_contraction_degenerate_denominator(ln4):
    """Test that a vanishing denominator with a nonzero numerator is reported."""
    profile = _profile({0: 0.0, 0.5: 1.0, 1: 0.0})
    with pytest.raises(DegenerateDenominator):
        half_site_contraction(profile, 0, ln4, C=10.0, epsilon=0.01)


def test_half_contraction_all_zero_is_degenerate(ln4):
    """Test that r_j = r_{j+1/2} = r_{j+1} = 0 is reported rather than passed."""
    profile = _profile({0: 0.0, 0.5: 0.0, 1: 0.0})
    with pytest.raises(DegenerateDenominator) as exc:
        half_site_contraction(profile, 0, ln4, C=10.0, epsilon=0.01)
    assert exc.value.context == {"n": 8, "j": "0", "vanishing": True}


def test_contraction_records_mark_vanishing_profiles():
    """Test that an all-zero profile gives trivially passing, flagged half-site records."""
    service = LocalizationService(RunConfig())
    profile = _profile({-1: 0.0, -0.5: 0.0, 0: 0.0, 0.5: 0.0, 1: 0.0})
    records = service.contraction_records(profile)
    assert [r["j"] for r in records] == ["-1", "0"]
    assert all(r["pass"] is True and r["flags"] == ["vanishing_profile"] for r in records)
    assert all("error" not in r for r in records)


def test_half_contraction_threshold(ln4):
    """Test passing and failing ratios against e^{−½Xq_n}."""
    X = contraction_exponent(_profile({0: 1.0}), 0, ln4, 10.0, 0.01)
    assert X == pytest.approx(ln4 - 2 * math.log(55) / 34 - 0.1)

    small = half_site_contraction(_profile({0: 1.0, 0.5: math.exp(-30), 1: 1.0}), 0, ln4, 10.0, 0.01)
    assert small.passed
    assert small.log_claimed == pytest.approx(-0.5 * X * 34)
    assert small.log_ratio == pytest.approx(-30 - math.log(2))

    large = half_site_contraction(_profile({0: 1.0, 0.5: 1.0, 1: 1.0}), 0, ln4, 10.0, 0.01)
    assert not large.passed


def test_contraction_j_limit(ln4):
    """Test that |j| beyond 2b_(n+1)/q_n + 10 is rejected."""
    with pytest.raises(PreconditionViolated):
        half_site_contraction(_profile({0: 1.0}), 11, ln4, 10.0, 0.01)
    with pytest.raises(PreconditionViolated):
        full_site_contraction(_profile({0: 1.0}), 0, ln4, 10.0, 0.01)


def test_full_contraction_terms(ln4):
    """Test both right-hand terms of the full-site inequality."""
    values = {0: 1.0, 0.5: 1e-3, 1: 1e-6, 1.5: 1e-3, 2: 1e-2}
    profile = _profile(values)
    result = full_site_contraction(profile, 1, ln4, 10.0, 0.01)
    X = contraction_exponent(profile, 1, ln4, 10.0, 0.01)
    assert result.half_term == pytest.approx(math.log(2e-3) - 0.5 * X * 34)
    assert result.full_term == pytest.approx(math.log(1.0 + 1e-2) - X * 34)
    assert result.passed == (math.log(1e-6) <= result.log_rhs)
    assert result.log_ratio == pytest.approx(math.log(1e-6) - result.log_rhs)


# Certificate


def test_bound_formulas():
    """Test the trivial and closed-form bounds."""
    assert trivial_log_bound(Fraction(1, 2), 34) == pytest.approx(math.log(68))
    assert trivial_log_bound(Fraction(2), 34) == pytest.approx(math.log(102))
    assert closed_form_log_bound(Fraction(1), 34, 0.5) == pytest.approx(math.log(4 * 34) - 0.5 * 34)
    assert closed_form_log_bound(Fraction(1, 2), 34, 0.5) == pytest.approx(math.log(4 * 34) - 0.25 * 34)


def test_iterated_bounds_only_decrease(golden, delta_function):
    """Test that iteration never loosens the trivial bounds."""
    profile = resonance_amplitudes(delta_function, golden, 8, 0.01, half_j_range(2))
    scale = iterate_bounds(profile, 1.0)
    assert scale.sweeps >= 1
    assert scale.iterated[Fraction(0)] == 0.0
    for t, bound in scale.iterated.items():
        if t != 0:
            assert bound <= trivial_log_bound(t, 34) + 1e-12
    assert scale.iterated[Fraction(1, 2)] < trivial_log_bound(Fraction(1, 2), 34)
    assert scale.consistent


def test_certificate_needs_profiles(ln4):
    """Test that missing profiles are reported."""
    with pytest.raises(InsufficientProfiles):
        decay_certificate([], ln4, 0.1)
    with pytest.raises(InsufficientProfiles):
        decay_certificate([_profile({0.5: 1.0, 1: 1.0})], ln4, 0.1)


def test_certificate_clamps_zero_profile(golden, delta_function, ln4):
    """Test that an all-zero off-center profile clamps the observed rate."""
    profile = resonance_amplitudes(delta_function, golden, 8, 0.01, half_j_range(2))
    beta = math.log(55) / 34
    cert = decay_certificate([profile], ln4, beta, C=10.0, epsilon=0.01)
    assert cert.clamped
    assert cert.final_rate == 50.0
    assert cert.final_slope == -50.0
    assert cert.rate_source == "resonant amplitudes"
    assert cert.theorem_bound == pytest.approx(-(ln4 - 2 * beta))
    assert cert.satisfied is True
    assert not cert.out_of_regime
    assert cert.site_bound_log(3) == pytest.approx(-cert.X * 3)
    assert cert.to_json()["scales"][0]["n"] == 8


def test_certificate_on_exponential_profile(golden, exponential_profile):
    """Test the observed rate of e^{−|k|} from its sites."""
    profile = resonance_amplitudes(exponential_profile, golden, 5, 0.01, half_j_range(2))
    cert = decay_certificate([profile], 2.0, 0.0, C=10.0, epsilon=0.01, phi=exponential_profile, k_min=2)
    assert cert.rate_source == "sites |k| >= 2"
    assert cert.final_rate == pytest.approx(1 - math.log(1 + math.e**2) / 4)
    assert not cert.clamped


def test_certificate_rate_on_golden_exponential_decay(golden, ln4):
    """Test that e^{−L|k|} certifies a positive rate of at least 0.85 L."""
    sites = np.arange(-200, 201)
    phi = SiteFunction.from_values(-200, np.exp(-ln4 * np.abs(sites)))
    profile = resonance_amplitudes(phi, golden, 8, 0.01, half_j_range(2))
    cert = decay_certificate([profile], ln4, 0.0, C=10.0, epsilon=0.01, phi=phi)
    assert cert.rate_source == "sites |k| >= 8"
    assert cert.final_rate >= 0.85 * ln4
    assert cert.final_rate <= ln4
    assert cert.final_slope == -cert.final_rate
    assert cert.to_json()["final_rate"] > 0


def test_certificate_out_of_regime(golden, delta_function):
    """Test that X ≤ 0 is flagged and L ≤ 2β leaves the comparison undecided."""
    profile = resonance_amplitudes(delta_function, golden, 8, 0.01, half_j_range(2))
    cert = decay_certificate([profile], 0.1, 0.1, C=10.0, epsilon=0.01)
    assert cert.out_of_regime
    assert cert.satisfied is None
