"""Interval schemes around resonant sites and the sine-minima claims.

A half-site scheme pairs I1 = [−2sq', −1] with a block of 4sq' sites
centered at jq_n + ⌊q_n/2⌋; a full-site scheme centers the second block at
jq_n. Here q' = q_{n−n0} and s is the largest integer with
s·q' ≤ (c − 2ε)q_n, c = 1/8 (half) or 1/4 (full).
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.arith.cf_arith import (
    Frequency,
    PhaseSpec,
    log_distances,
    log_sin_pi,
    orbit_phases,
    resonance_exponents,
)
from app.core.config import get_settings
from app.core.errors import NotCompletelyResonant, PreconditionViolated, ScaleTooSmall
from app.core.logging import get_logger
from app.resonance.lagrange import lagrange_terms

logger = get_logger(__name__)
settings = get_settings()

SCHEME_WIDTH = {"half": Fraction(1, 8), "full": Fraction(1, 4)}


def _exact_epsilon(epsilon: Any) -> Fraction:
    return Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)


def j_limit(freq: Frequency, n: int) -> float:
    """2b_{n+1}/q_n + 10 with b_{n+1} = 10^-5 q_{n+1}."""
    return 2e-5 * freq.q(n + 1) / freq.q(n) + 10


@dataclass
class LagrangeScheme:
    """Node intervals I1, I2 for one (n, j, kind, ε)."""

    n: int
    kind: str
    j: int
    n0: int
    s: int
    q_n: int
    q_sub: int
    I1: Tuple[int, int]
    I2: Tuple[int, int]
    epsilon: float
    clamped: bool = False

    @property
    def k(self) -> int:
        return 6 * self.s * self.q_sub - 1

    @property
    def center(self) -> int:
        """Resonant site the second block is built around."""
        if self.kind == "half":
            return self.j * self.q_n + self.q_n // 2
        return self.j * self.q_n

    def sites(self) -> np.ndarray:
        return np.concatenate(
            [np.arange(self.I1[0], self.I1[1] + 1), np.arange(self.I2[0], self.I2[1] + 1)]
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "kind": self.kind,
            "j": self.j,
            "n0": self.n0,
            "s": self.s,
            "q_n": self.q_n,
            "q_sub": self.q_sub,
            "I1": list(self.I1),
            "I2": list(self.I2),
            "k": self.k,
            "epsilon": self.epsilon,
            "clamped": self.clamped,
        }


def build_scheme(
    freq: Frequency, n: int, j: int, kind: str, epsilon: float, allow_clamp: bool = False
) -> LagrangeScheme:
    """n0 is the least positive integer with q_{n−n0} ≤ (ε/2)(c − 2ε)q_n.

    With ``allow_clamp`` a scale that admits no such n0 uses q_0 = 1 and the
    scheme is flagged; otherwise ScaleTooSmall is raised.
    """
    if kind not in SCHEME_WIDTH:
        raise PreconditionViolated(f"kind must be 'half' or 'full', got {kind!r}")
    if kind == "full" and j == 0:
        raise PreconditionViolated("full-site schemes need j != 0")
    if abs(j) > j_limit(freq, n):
        raise PreconditionViolated(f"|j| = {abs(j)} exceeds 2 b_(n+1)/q_n + 10")
    eps = _exact_epsilon(epsilon)
    c = SCHEME_WIDTH[kind]
    width = c - 2 * eps
    if eps <= 0 or width <= 0:
        raise PreconditionViolated(f"epsilon must lie in (0, {float(c) / 2}) for {kind}-site schemes")

    q_n = freq.q(n)
    threshold = eps / 2 * width * q_n
    n0 = next((t for t in range(1, n + 1) if freq.q(n - t) <= threshold), None)
    clamped = False
    if n0 is None:
        if not allow_clamp:
            raise ScaleTooSmall(
                f"no n0 with q_(n-n0) <= {float(threshold):.4g} at n={n}", {"n": n, "epsilon": epsilon}
            )
        n0, clamped = n, True
        logger.warning(f"Scheme at n={n}, eps={epsilon} clamped to q_0 = 1")

    q_sub = freq.q(n - n0)
    s = math.floor(width * q_n / q_sub)
    if s < 1:
        raise ScaleTooSmall(f"s = {s} at n={n}", {"n": n, "epsilon": epsilon})

    half = 2 * s * q_sub
    center = j * q_n + (q_n // 2 if kind == "half" else 0)
    return LagrangeScheme(
        n=n,
        kind=kind,
        j=j,
        n0=n0,
        s=s,
        q_n=q_n,
        q_sub=q_sub,
        I1=(-half, -1),
        I2=(center - half, center + half - 1),
        epsilon=float(epsilon),
        clamped=clamped,
    )


def scheme_sandwich(scheme: LagrangeScheme) -> bool:
    """(c − 3ε)q_n ≤ s·q' ≤ (c − 2ε)q_n, exactly."""
    eps = _exact_epsilon(scheme.epsilon)
    c = SCHEME_WIDTH[scheme.kind]
    sq = scheme.s * scheme.q_sub
    return (c - 3 * eps) * scheme.q_n <= sq <= (c - 2 * eps) * scheme.q_n


@dataclass
class SineRecord:
    """Sine minima, claimed lower bounds and Lag bound for one node m."""

    m: int
    group: str
    phase_min: float
    phase_bound: float
    freq_min: float
    freq_bound: float
    achievers: int
    allowed: int
    lag: float
    lag_bound: float

    @property
    def passed(self) -> bool:
        return (
            self.phase_min >= self.phase_bound
            and self.freq_min >= self.freq_bound
            and self.achievers <= self.allowed
            and self.lag <= self.lag_bound
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "group": self.group,
            "phase_min": self.phase_min,
            "phase_bound": self.phase_bound,
            "freq_min": self.freq_min,
            "freq_bound": self.freq_bound,
            "achievers": self.achievers,
            "allowed": self.allowed,
            "lag": self.lag,
            "lag_bound": self.lag_bound,
            "pass": self.passed,
        }


@dataclass
class SineMinimaAudit:
    scheme: LagrangeScheme
    records: List[SineRecord] = field(default_factory=list)
    lag_method: str = ""

    @property
    def claim_pass(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def pass_rate(self) -> float:
        return sum(r.passed for r in self.records) / len(self.records) if self.records else 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme.to_json(),
            "claim_pass": self.claim_pass,
            "pass_rate": self.pass_rate,
            "lag_method": self.lag_method,
            "records": [r.to_json() for r in self.records],
        }


def _group(scheme: LagrangeScheme, m: int) -> Tuple[str, bool, int]:
    """(group name, whether the phase bound carries −β_j q_n, allowed achievers)."""
    in_first = scheme.I1[0] <= m <= scheme.I1[1]
    if scheme.kind == "half":
        return ("I1", False, 1) if in_first else ("I2", True, 1)
    if in_first or m < scheme.center:
        return "I1+left", True, 1
    return "right", True, 2


def sine_minima_audit(
    scheme: LagrangeScheme,
    freq: Frequency,
    theta: PhaseSpec,
    C: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> SineMinimaAudit:
    """Exhaustive sine minima over I1 ∪ I2 and the Lag_m bounds they imply.

    For each node m: min_ℓ ln|sin π(2θ + (ℓ+m)α)| and
    min_{ℓ≠m} ln|sin π(ℓ−m)α| against −β_j q_n − C ln q_n (or −C ln q_n), the
    number of ℓ closer than 1/(2q_n) to resonance, and Lag_m against
    εq_n, (β_j + ε)q_n or (2β_j + ε)q_n.
    """
    if not theta.completely_resonant:
        raise NotCompletelyResonant(f"{theta.describe()} does not satisfy 2θ ∈ αZ + Z")
    C = settings.default_c if C is None else C
    epsilon = scheme.epsilon if epsilon is None else epsilon
    q_n = scheme.q_n
    beta_j = resonance_exponents(freq).beta_j(scheme.n, scheme.j)
    log_q = math.log(q_n)
    near = -math.log(2 * q_n)

    sites = scheme.sites()
    m_theta, r = theta.linear_form()
    lo, hi = int(sites.min()), int(sites.max())

    # ln|sin π(2θ + tα)| for every t = ℓ + m, and ln|sin π dα| for d = ℓ − m
    sums = np.arange(2 * lo, 2 * hi + 1)
    phase_dist = log_distances(freq, (sums + m_theta).tolist(), r)
    phase_sin = log_sin_pi(phase_dist)
    diffs = np.arange(lo - hi, hi - lo + 1)
    freq_dist = log_distances(freq, diffs.tolist())
    freq_sin = log_sin_pi(freq_dist)

    terms = lagrange_terms(orbit_phases(freq, theta, sites).tolist())

    audit = SineMinimaAudit(scheme, lag_method=terms.method)
    for idx, m in enumerate(sites.tolist()):
        group, resonant_phase, allowed = _group(scheme, m)
        ph = phase_sin[sites + m - 2 * lo]
        fr_idx = sites - m - (lo - hi)
        others = sites != m
        fr = freq_sin[fr_idx[others]]
        achievers = int(np.count_nonzero(phase_dist[sites + m - 2 * lo] < near))
        achievers += int(np.count_nonzero(freq_dist[fr_idx[others]] < near))

        phase_bound = -C * log_q - (beta_j * q_n if resonant_phase else 0.0)
        freq_bound = -C * log_q
        if scheme.kind == "full" and group == "I1+left":
            freq_bound -= beta_j * q_n
        if scheme.kind == "half":
            lag_bound = (beta_j + epsilon) * q_n if group == "I2" else epsilon * q_n
        else:
            lag_bound = (2 * beta_j + epsilon) * q_n

        audit.records.append(
            SineRecord(
                m=m,
                group=group,
                phase_min=float(np.min(ph)),
                phase_bound=phase_bound,
                freq_min=float(np.min(fr)) if fr.size else math.inf,
                freq_bound=freq_bound,
                achievers=achievers,
                allowed=allowed,
                lag=float(terms.values[idx]),
                lag_bound=lag_bound,
            )
        )
    failed = sum(not r.passed for r in audit.records)
    if failed:
        logger.warning(
            f"Sine-minima claims fail for {failed}/{len(audit.records)} nodes "
            f"(n={scheme.n}, j={scheme.j}, kind={scheme.kind}, C={C}, eps={epsilon})"
        )
    return audit
