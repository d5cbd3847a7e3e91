"""Contraction inequalities between neighboring resonant amplitudes.

Half sites:  r_{j+1/2} ≤ e^{−½Xq_n}(r_j + r_{j+1})
Full sites:  r_j ≤ e^{−½Xq_n}(r_{j+1/2} + r_{j−1/2}) + e^{−Xq_n}(r_{j+1} + r_{j−1})

with X = L − 2β_j − Cε.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Optional

import numpy as np

from app.core.config import get_settings
from app.core.errors import DegenerateDenominator, PreconditionViolated
from app.core.logging import get_logger
from app.resonance.amplitudes import ResonanceProfile

logger = get_logger(__name__)
settings = get_settings()

HALF = Fraction(1, 2)


def _json_log(value: Optional[float]) -> Optional[float]:
    if value is None or math.isinf(value):
        return None
    return value


def contraction_exponent(profile: ResonanceProfile, j: Any, L: float, C: float, epsilon: float) -> float:
    """X = L − 2β_j − Cε."""
    return L - 2.0 * profile.beta_j(j) - C * epsilon


@dataclass
class HalfSiteContraction:
    j: Fraction
    n: int
    log_ratio: Optional[float]
    log_claimed: float
    passed: bool

    @property
    def ratio(self) -> Optional[float]:
        return None if self.log_ratio is None else math.exp(self.log_ratio)

    def to_json(self) -> Dict[str, Any]:
        return {
            "j": str(self.j),
            "n": self.n,
            "log_ratio": _json_log(self.log_ratio),
            "log_claimed": self.log_claimed,
            "pass": self.passed,
        }


def _check_j(profile: ResonanceProfile, j: Any) -> None:
    if abs(float(j)) > profile.j_limit():
        raise PreconditionViolated(f"|j| = {abs(float(j))} exceeds 2 b_(n+1)/q_n + 10")


def half_site_contraction(
    profile: ResonanceProfile,
    j: int,
    L: float,
    C: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> HalfSiteContraction:
    """r_{j+1/2}/(r_j + r_{j+1}) against e^{−½(L − 2β_j − Cε)q_n}."""
    C = settings.default_c if C is None else C
    epsilon = profile.epsilon if epsilon is None else epsilon
    _check_j(profile, j)
    j = Fraction(j)
    X = contraction_exponent(profile, j, L, C, epsilon)
    log_claimed = -0.5 * X * profile.q_n

    numerator = profile.log_r(j + HALF)
    denominator = float(np.logaddexp(profile.log_r(j), profile.log_r(j + 1)))
    if math.isinf(denominator):
        vanishing = "= 0" if math.isinf(numerator) else "> 0"
        raise DegenerateDenominator(
            f"r_{j} + r_{j + 1} = 0 with r_{j + HALF} {vanishing}",
            {"n": profile.n, "j": str(j), "vanishing": math.isinf(numerator)},
        )
    if math.isinf(numerator):
        return HalfSiteContraction(j, profile.n, -math.inf, log_claimed, True)
    log_ratio = numerator - denominator
    passed = log_ratio <= log_claimed
    if not passed:
        logger.warning(
            f"Half-site contraction fails: n={profile.n}, j={j}, log ratio {log_ratio:.3f} > {log_claimed:.3f}"
        )
    return HalfSiteContraction(j, profile.n, log_ratio, log_claimed, passed)


@dataclass
class FullSiteContraction:
    j: Fraction
    n: int
    log_r: float
    half_term: Optional[float]
    full_term: Optional[float]
    log_rhs: Optional[float]
    passed: bool

    @property
    def log_ratio(self) -> Optional[float]:
        """ln(r_j / rhs); None when the right side vanishes."""
        if self.log_rhs is None or math.isinf(self.log_rhs):
            return None
        return self.log_r - self.log_rhs

    def to_json(self) -> Dict[str, Any]:
        return {
            "j": str(self.j),
            "n": self.n,
            "log_r": _json_log(self.log_r),
            "half_term": _json_log(self.half_term),
            "full_term": _json_log(self.full_term),
            "log_rhs": _json_log(self.log_rhs),
            "log_ratio": _json_log(self.log_ratio),
            "pass": self.passed,
        }


def full_site_contraction(
    profile: ResonanceProfile,
    j: int,
    L: float,
    C: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> FullSiteContraction:
    """Both right-hand terms of the full-site inequality and the comparison."""
    C = settings.default_c if C is None else C
    epsilon = profile.epsilon if epsilon is None else epsilon
    if j == 0:
        raise PreconditionViolated("full-site contraction needs j != 0")
    _check_j(profile, j)
    j = Fraction(j)
    X = contraction_exponent(profile, j, L, C, epsilon)
    q = profile.q_n

    half_pair = float(np.logaddexp(profile.log_r(j + HALF), profile.log_r(j - HALF)))
    full_pair = float(np.logaddexp(profile.log_r(j + 1), profile.log_r(j - 1)))
    half_term = half_pair - 0.5 * X * q
    full_term = full_pair - X * q
    rhs = float(np.logaddexp(half_term, full_term))
    measured = profile.log_r(j)
    passed = measured <= rhs
    if not passed:
        logger.warning(f"Full-site contraction fails: n={profile.n}, j={j}, log r_j {measured:.3f} > {rhs:.3f}")
    return FullSiteContraction(j, profile.n, measured, half_term, full_term, rhs, passed)
