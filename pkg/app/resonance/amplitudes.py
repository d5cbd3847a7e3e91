"""Resonant amplitudes r_j at scale n and the off-resonance decay bound.

r_j is the largest |φ| over the closed window of radius 10εq_n around the
resonant site of j: jq_n for integer j, ℓq_n + ⌊q_n/2⌋ for j = ℓ + 1/2.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from app.arith.cf_arith import Frequency
from app.core.errors import PreconditionViolated, RangeExceeded, SiteTooResonant
from app.core.logging import get_logger
from app.operator.cocycle import SiteFunction

logger = get_logger(__name__)


def half_index(j: Any) -> Fraction:
    """j as an exact multiple of 1/2."""
    value = Fraction(j)
    if (2 * value).denominator != 1:
        raise PreconditionViolated(f"j must be a multiple of 1/2, got {j}")
    return value


def resonant_site(j: Any, q_n: int) -> int:
    j = half_index(j)
    whole = math.floor(j)
    if j == whole:
        return whole * q_n
    return whole * q_n + q_n // 2


def _window(j: Fraction, q_n: int, epsilon: Fraction) -> Tuple[int, int]:
    center = resonant_site(j, q_n)
    radius = 10 * epsilon * q_n
    return center + math.ceil(-radius), center + math.floor(radius)


def _exact(epsilon: Any) -> Fraction:
    return Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)


@dataclass
class ResonanceProfile:
    """ln r_j for integer and half-integer j at one scale (−inf for r_j = 0)."""

    n: int
    q_n: int
    q_next: int
    epsilon: float
    amplitudes: Dict[Fraction, float] = field(default_factory=dict)

    @property
    def b_n(self) -> int:
        return math.floor(Fraction(self.q_n, 10**5))

    def log_r(self, j: Any) -> float:
        key = half_index(j)
        if key not in self.amplitudes:
            raise RangeExceeded(f"r_{key} not in the profile at n={self.n}", {"n": self.n, "j": str(key)})
        return self.amplitudes[key]

    def has(self, j: Any) -> bool:
        return half_index(j) in self.amplitudes

    def beta_j(self, j: Any) -> float:
        """(ln q_{n+1} − ln(|j|+1))/q_n."""
        return (math.log(self.q_next) - math.log(abs(float(j)) + 1.0)) / self.q_n

    def j_limit(self) -> float:
        return 2e-5 * self.q_next / self.q_n + 10

    @classmethod
    def from_values(
        cls, n: int, q_n: int, q_next: int, epsilon: float, values: Dict[Any, float]
    ) -> "ResonanceProfile":
        """Profile from plain r_j values (zero allowed)."""
        amplitudes = {half_index(j): (math.log(v) if v > 0 else -math.inf) for j, v in values.items()}
        return cls(n, q_n, q_next, epsilon, amplitudes)

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "q_n": self.q_n,
            "epsilon": self.epsilon,
            "b_n": self.b_n,
            "log_r": {str(j): (None if math.isinf(v) else v) for j, v in sorted(self.amplitudes.items())},
        }


def resonance_amplitudes(
    phi: SiteFunction, freq: Frequency, n: int, epsilon: float, j_range: Iterable[Any]
) -> ResonanceProfile:
    """Closed-window sup of |φ| around each resonant site in ``j_range``."""
    q_n, q_next = freq.q(n), freq.q(n + 1)
    eps = _exact(epsilon)
    profile = ResonanceProfile(n, q_n, q_next, float(epsilon))
    for j in j_range:
        key = half_index(j)
        lo, hi = _window(key, q_n, eps)
        if not phi.covers(lo, hi):
            raise RangeExceeded(
                f"window [{lo}, {hi}] for j={key} lies outside [{phi.start}, {phi.stop}]",
                {"n": n, "j": str(key)},
            )
        profile.amplitudes[key] = phi.window_max_log(lo, hi)
    return profile


def half_j_range(j_max: int) -> List[Fraction]:
    """−j_max, −j_max + 1/2, …, j_max."""
    return [Fraction(t, 2) for t in range(-2 * j_max, 2 * j_max + 1)]


@dataclass
class OffDiagonalCheck:
    k: int
    terms: Tuple[str, str]
    bound_log: float
    actual_log: float
    passed: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "terms": list(self.terms),
            "bound_log": None if math.isinf(self.bound_log) else self.bound_log,
            "actual_log": None if math.isinf(self.actual_log) else self.actual_log,
            "pass": self.passed,
        }


def resonance_distance(k: int, q_n: int) -> Fraction:
    """dist(k, (q_n/2)Z)."""
    t = Fraction(2 * k, q_n)
    return abs(t - round(t)) * Fraction(q_n, 2)


def offdiag_decay_check(
    phi: SiteFunction, profile: ResonanceProfile, k: int, L: float, epsilon: Optional[float] = None
) -> OffDiagonalCheck:
    """|φ(k)| ≤ r_t e^{−(L−ε)(d_t − 3εq_n)} + r_{t+1/2} e^{−(L−ε)(d_{t+1/2} − 3εq_n)}.

    t is the half-integer with tq_n ≤ k ≤ (t + 1/2)q_n and d_t = |k − tq_n|.
    """
    eps = _exact(profile.epsilon if epsilon is None else epsilon)
    q_n = profile.q_n
    if not phi.covers(k, k):
        raise RangeExceeded(f"site {k} outside [{phi.start}, {phi.stop}]", {"k": k})
    if resonance_distance(k, q_n) < 10 * eps * q_n:
        raise SiteTooResonant(f"site {k} is within 10 eps q_n of (q_n/2)Z", {"k": k, "n": profile.n})
    t_lo = Fraction(math.floor(Fraction(2 * k, q_n)), 2)
    t_hi = t_lo + Fraction(1, 2)

    e = float(eps)
    slack = 3 * e * q_n
    logs = []
    for t in (t_lo, t_hi):
        d = abs(Fraction(k) - t * q_n)
        logs.append(profile.log_r(t) - (L - e) * (float(d) - slack))
    bound = float(np.logaddexp(logs[0], logs[1]))
    actual = phi.log_abs(k)
    return OffDiagonalCheck(k, (str(t_lo), str(t_hi)), bound, actual, actual <= bound)


@dataclass
class OffDiagonalSweep:
    n: int
    checked: int
    passed: int
    skipped: int
    failures: List[OffDiagonalCheck]

    @property
    def pass_rate(self) -> float:
        return self.passed / self.checked if self.checked else 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "checked": self.checked,
            "passed": self.passed,
            "skipped": self.skipped,
            "pass_rate": self.pass_rate,
            "failures": [f.to_json() for f in self.failures[:20]],
        }


def offdiag_decay_sweep(
    phi: SiteFunction, profile: ResonanceProfile, L: float, sites: Iterable[int]
) -> OffDiagonalSweep:
    """Pass rate of the off-resonance bound over admissible sites."""
    checked = passed = skipped = 0
    failures = []
    for k in sites:
        try:
            result = offdiag_decay_check(phi, profile, int(k), L)
        except (SiteTooResonant, RangeExceeded):
            skipped += 1
            continue
        checked += 1
        if result.passed:
            passed += 1
        else:
            failures.append(result)
    if failures:
        logger.warning(f"Off-resonance bound fails at {len(failures)}/{checked} sites (n={profile.n})")
    return OffDiagonalSweep(profile.n, checked, passed, skipped, failures)
