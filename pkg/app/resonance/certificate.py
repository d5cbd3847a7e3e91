"""Decay certificate from per-scale resonance profiles.

Alternating the half-site and full-site contractions turns the trivial
bounds r_t ≤ (⌈|t|⌉+1)q_n into

    r_ℓ     ≤ (2ℓ+2)q_n e^{−Xℓq_n}
    r_{ℓ−½} ≤ (2ℓ+2)q_n e^{−X(ℓ−½)q_n},      X = L − 2β − Cε,

which at every scale gives the per-site bound e^{−Xk}.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.errors import InsufficientProfiles
from app.core.logging import get_logger
from app.operator.cocycle import SiteFunction
from app.resonance.amplitudes import ResonanceProfile

logger = get_logger(__name__)
settings = get_settings()

HALF = Fraction(1, 2)
SETTLE_TOLERANCE = 1e-12


def _finite(value: float) -> Optional[float]:
    return None if value is None or math.isinf(value) else value


def _keyed(values: Dict[Fraction, float]) -> Dict[str, Optional[float]]:
    return {str(t): _finite(v) for t, v in sorted(values.items())}


def trivial_log_bound(t: Fraction, q_n: int) -> float:
    """ln((⌈|t|⌉ + 1)q_n)."""
    return math.log((math.ceil(abs(t)) + 1) * q_n)


def closed_form_log_bound(t: Fraction, q_n: int, X: float) -> float:
    """ln of (2ℓ+2)q_n e^{−X|t|q_n} with ℓ = ⌈|t|⌉."""
    ell = math.ceil(abs(t))
    return math.log((2 * ell + 2) * q_n) - X * float(abs(t)) * q_n


@dataclass
class ScaleCertificate:
    """Bounds on ln r_t at one scale."""

    n: int
    q_n: int
    X: float
    closed_form: Dict[Fraction, float]
    iterated: Dict[Fraction, float]
    measured: Dict[Fraction, float]
    sweeps: int

    @property
    def violations(self) -> List[Fraction]:
        """Indices whose measured amplitude exceeds the iterated bound."""
        return [
            t
            for t, value in self.measured.items()
            if t in self.iterated and value > self.iterated[t] + SETTLE_TOLERANCE
        ]

    @property
    def consistent(self) -> bool:
        return not self.violations

    @property
    def monotone(self) -> bool:
        """Iterated bounds do not increase with |t| on either side."""
        for sign in (1, -1):
            ordered = [self.iterated[t] for t in sorted(self.iterated) if t * sign > 0]
            if sign < 0:
                ordered.reverse()
            if any(b > a + SETTLE_TOLERANCE for a, b in zip(ordered, ordered[1:])):
                return False
        return True

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "q_n": self.q_n,
            "X": self.X,
            "closed_form": _keyed(self.closed_form),
            "iterated": _keyed(self.iterated),
            "measured": _keyed(self.measured),
            "sweeps": self.sweeps,
            "consistent": self.consistent,
            "monotone": self.monotone,
            "violations": [str(t) for t in self.violations],
        }


@dataclass
class DecayCertificate:
    L: float
    beta: float
    C: float
    epsilon: float
    final_rate: float
    rate_source: str
    theorem_bound: float
    satisfied: Optional[bool]
    out_of_regime: bool
    clamped: bool = False
    scales: List[ScaleCertificate] = field(default_factory=list)

    @property
    def X(self) -> float:
        return self.L - 2.0 * self.beta - self.C * self.epsilon

    @property
    def rates(self) -> Dict[Fraction, float]:
        """Iterated bounds at the finest scale."""
        return self.scales[-1].iterated if self.scales else {}

    @property
    def final_slope(self) -> float:
        """Upper estimate of ln|φ(k)|/|k|, the side compared with −(L − 2β)."""
        return -self.final_rate

    def site_bound_log(self, k: int) -> float:
        """ln of the per-site bound e^{−(L−2β−Cε)|k|}."""
        return -self.X * abs(k)

    def to_json(self) -> Dict[str, Any]:
        return {
            "L": self.L,
            "beta": self.beta,
            "C": self.C,
            "epsilon": self.epsilon,
            "X": self.X,
            "final_rate": self.final_rate,
            "final_slope": self.final_slope,
            "rate_source": self.rate_source,
            "theorem_bound": self.theorem_bound,
            "satisfied": self.satisfied,
            "out_of_regime": self.out_of_regime,
            "clamped": self.clamped,
            "scales": [s.to_json() for s in self.scales],
        }


def _neighbor(bounds: Dict[Fraction, float], t: Fraction, q_n: int) -> float:
    return bounds[t] if t in bounds else trivial_log_bound(t, q_n)


def iterate_bounds(
    profile: ResonanceProfile, X: float, max_sweeps: Optional[int] = None
) -> ScaleCertificate:
    """Sweep the contractions over the profile's index range until the bounds settle.

    Only the anchor r_0 is taken from the measurement; every other index
    starts from the trivial bound. Indices outside the range keep the
    trivial bound.
    """
    q = profile.q_n
    indices = sorted(profile.amplitudes)
    reach = max(abs(t) for t in indices)
    bounds = {t: trivial_log_bound(t, q) for t in indices}
    bounds[Fraction(0)] = max(profile.log_r(0), 0.0)
    max_sweeps = max_sweeps or int(4 * reach + 4)

    half_factor, full_factor = -0.5 * X * q, -X * q
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        changed = False
        for t in sorted(indices, key=lambda u: (abs(u), u)):
            if t == 0:
                continue
            if t.denominator == 2:
                rhs = half_factor + float(
                    np.logaddexp(_neighbor(bounds, t - HALF, q), _neighbor(bounds, t + HALF, q))
                )
            else:
                halves = float(np.logaddexp(_neighbor(bounds, t - HALF, q), _neighbor(bounds, t + HALF, q)))
                wholes = float(np.logaddexp(_neighbor(bounds, t - 1, q), _neighbor(bounds, t + 1, q)))
                rhs = float(np.logaddexp(half_factor + halves, full_factor + wholes))
            if rhs < bounds[t] - SETTLE_TOLERANCE:
                bounds[t] = rhs
                changed = True
        if not changed:
            break

    closed = {t: closed_form_log_bound(t, q, X) for t in indices if t != 0}
    return ScaleCertificate(profile.n, q, X, closed, bounds, dict(profile.amplitudes), sweeps)


def _site_rate(phi: SiteFunction, k_min: int) -> float:
    """min over |k| ≥ k_min of −ln(φ²(k) + φ²(k−1))/(2|k|)."""
    slowest = math.inf
    for k in phi.sites.tolist():
        if abs(k) < k_min or k - 1 < phi.start:
            continue
        pair = float(np.logaddexp(2 * phi.log_abs(k), 2 * phi.log_abs(k - 1)))
        slowest = min(slowest, -0.5 * pair / abs(k))
    return slowest


def _profile_rate(profiles: Sequence[ResonanceProfile]) -> float:
    """min over t ≠ 0 of −ln r_t/(|t|q_n)."""
    slowest = math.inf
    for profile in profiles:
        for t, value in profile.amplitudes.items():
            if t != 0:
                slowest = min(slowest, -value / (float(abs(t)) * profile.q_n))
    return slowest


def decay_certificate(
    profiles: Sequence[ResonanceProfile],
    L: float,
    beta: float,
    C: Optional[float] = None,
    epsilon: Optional[float] = None,
    phi: Optional[SiteFunction] = None,
    k_min: Optional[int] = None,
    slack: float = 0.1,
) -> DecayCertificate:
    """Closed-form and iterated amplitude bounds per scale plus the observed rate.

    The observed rate is the slowest decay seen, as a positive rate: over sites
    |k| ≥ k_min of ``phi`` when given (default k_min = ⌊q_{n_max}/4⌋), otherwise
    over the resonant amplitudes. Its negation, the final slope, is compared
    with the bound −(L − 2β).
    """
    if not profiles:
        raise InsufficientProfiles("no resonance profiles supplied")
    for profile in profiles:
        if not profile.has(0) or len(profile.amplitudes) < 2:
            raise InsufficientProfiles(
                f"profile at n={profile.n} needs r_0 and at least one neighbor", {"n": profile.n}
            )
    C = settings.default_c if C is None else C
    epsilon = profiles[0].epsilon if epsilon is None else epsilon
    X = L - 2.0 * beta - C * epsilon
    out_of_regime = X <= 0
    if out_of_regime:
        logger.warning(f"L - 2 beta - C eps = {X:.4f} <= 0 (L={L}, beta={beta}, C={C}, eps={epsilon})")

    ordered = sorted(profiles, key=lambda p: p.n)
    scales = [iterate_bounds(p, X) for p in ordered]
    for scale in scales:
        if not scale.consistent:
            logger.warning(
                f"Measured amplitudes exceed iterated bounds at n={scale.n}: "
                f"{[str(t) for t in scale.violations]}"
            )

    if phi is not None:
        k_min = max(1, ordered[-1].q_n // 4) if k_min is None else k_min
        rate = _site_rate(phi, k_min)
        source = f"sites |k| >= {k_min}"
    else:
        rate = _profile_rate(ordered)
        source = "resonant amplitudes"

    clamped = not rate < settings.rate_cap
    if clamped:
        rate = settings.rate_cap
        logger.warning(f"Observed decay rate clamped to {rate} ({source})")

    theorem_bound = -(L - 2.0 * beta)
    satisfied = None if L - 2.0 * beta <= 0 else -rate <= theorem_bound + slack
    return DecayCertificate(
        L=L,
        beta=beta,
        C=C,
        epsilon=epsilon,
        final_rate=rate,
        rate_source=source,
        theorem_bound=theorem_bound,
        satisfied=satisfied,
        out_of_regime=out_of_regime,
        clamped=clamped,
        scales=scales,
    )
