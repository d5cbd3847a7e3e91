"""Exact continued-fraction arithmetic for frequencies.

A frequency α ∈ (0, 1) is held by its partial quotients a_1, a_2, … with
a_0 = 0. Convergents follow q_{-1} = 0, p_{-1} = 1, q_0 = 1, p_0 = 0 and
q_n = a_n q_{n-1} + q_{n-2}. All distances ‖kα + r‖ are certified from the
convergent brackets, never from a rounded α.
"""

import math
import threading
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from app.arith.backends import LN2, is_mp
from app.arith.numerics import LogScalar
from app.core.config import get_settings
from app.core.errors import (
    DepthOverflow,
    EnumerationCapExceeded,
    NonGeneric,
    NotCompletelyResonant,
    PrecisionExhausted,
    PreconditionViolated,
)
from app.core.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

# relative width accepted for a certified distance
CERTIFIED_REL = Fraction(1, 2**64)
MAX_REFINE = 4000
# bits kept exact in the high half of α for the vectorized orbit
SPLIT_BITS = 26
FAST_SITE_LIMIT = 2**26


def log_fraction(x: Fraction) -> float:
    """ln x for a positive rational with huge numerator or denominator."""
    if x <= 0:
        raise ValueError("log of a non-positive rational")
    return _log_int(x.numerator) - _log_int(x.denominator)


def _log_int(value: int) -> float:
    shift = max(value.bit_length() - 60, 0)
    return math.log(value >> shift) + shift * LN2


def _log_ratio(num: int, den_bits: int) -> float:
    """ln(num / 2^den_bits)."""
    shift = max(num.bit_length() - 60, 0)
    return math.log(num >> shift) + (shift - den_bits) * LN2


def _dist_to_int(x: Fraction) -> Fraction:
    return abs(x - round(x))


class Frequency:
    """Irrational α given by its partial quotients.

    Quotients beyond the stored prefix come from the tail rule: a repeating
    period (quadratic surds), all ones, or continued certified expansion of
    the real input interval. Convergents are extended lazily under a lock.
    """

    def __init__(
        self,
        quotients: Sequence[int],
        *,
        period: Optional[Sequence[int]] = None,
        interval: Optional[Tuple[Fraction, Fraction]] = None,
        origin: str = "from-quotients",
        note: str = "",
    ):
        prefix = [int(a) for a in quotients]
        if any(a < 1 for a in prefix):
            raise PreconditionViolated("partial quotients must be positive integers")
        if period is not None and (not period or any(int(a) < 1 for a in period)):
            raise PreconditionViolated("period must be a non-empty list of positive integers")
        if not prefix and period is None and interval is None:
            raise PreconditionViolated("a frequency needs quotients or a tail rule")

        self.prefix = tuple(prefix)
        self.period = tuple(int(a) for a in period) if period is not None else None
        self.origin = origin
        self.note = note
        self._quotients: List[int] = list(prefix)
        self._interval = interval
        self._p: List[int] = [1, 0]
        self._q: List[int] = [0, 1]
        self._fixed: Dict[int, int] = {}
        self._lock = threading.RLock()

    # Constructors

    @classmethod
    def from_quotients(cls, quotients: Sequence[int], note: str = "") -> "Frequency":
        """Quotient prefix followed by a tail of ones."""
        return cls(quotients, note=note)

    @classmethod
    def periodic(cls, period: Sequence[int], prefix: Sequence[int] = (), note: str = "") -> "Frequency":
        return cls(prefix, period=period, note=note)

    @classmethod
    def golden(cls) -> "Frequency":
        """(√5 − 1)/2."""
        return cls.periodic((1,), note="golden mean")

    @classmethod
    def silver(cls) -> "Frequency":
        """√2 − 1."""
        return cls.periodic((2,), note="sqrt(2) - 1")

    @property
    def tail(self) -> str:
        if self._interval is not None:
            return "expand"
        if self.period is not None:
            return "periodic"
        return "ones"

    # Quotients and convergents

    def quotient(self, n: int) -> int:
        """Partial quotient a_n, n ≥ 1 (a_0 = 0)."""
        if n == 0:
            return 0
        if n < 0:
            raise PreconditionViolated(f"quotient index must be >= 0, got {n}")
        if n <= len(self._quotients):
            return self._quotients[n - 1]
        with self._lock:
            while len(self._quotients) < n:
                self._quotients.append(self._next_quotient(len(self._quotients) + 1))
            return self._quotients[n - 1]

    def _next_quotient(self, n: int) -> int:
        if self._interval is not None:
            lo, hi = self._interval
            if lo <= 0:
                raise PrecisionExhausted(
                    f"input precision exhausted at quotient {n}", {"origin": self.origin}
                )
            a, self._interval = _expand_step(lo, hi, n)
            return a
        if self.period is not None:
            return self.period[(n - len(self.prefix) - 1) % len(self.period)]
        return 1

    def quotients(self, n: int) -> List[int]:
        """First ``n`` partial quotients."""
        self.quotient(n)
        return list(self._quotients[:n])

    def convergent(self, n: int) -> Tuple[int, int]:
        """(p_n, q_n), extending the recursion as needed."""
        if n < -1:
            raise PreconditionViolated(f"convergent index must be >= -1, got {n}")
        if n + 1 < len(self._q):
            return self._p[n + 1], self._q[n + 1]
        with self._lock:
            while len(self._q) <= n + 1:
                k = len(self._q) - 1
                a = self.quotient(k)
                self._p.append(a * self._p[k] + self._p[k - 1])
                self._q.append(a * self._q[k] + self._q[k - 1])
            return self._p[n + 1], self._q[n + 1]

    def q(self, n: int) -> int:
        return self.convergent(n)[1]

    def p(self, n: int) -> int:
        return self.convergent(n)[0]

    def index_above(self, bound: int) -> int:
        """Least n ≥ 0 with q_n > bound."""
        n = 0
        while self.q(n) <= bound:
            n += 1
        return n

    def bracket(self, n: int) -> Tuple[Fraction, Fraction]:
        """Interval between consecutive convergents, which contains α."""
        p0, q0 = self.convergent(n)
        p1, q1 = self.convergent(n + 1)
        a, b = Fraction(p0, q0), Fraction(p1, q1)
        return (a, b) if a < b else (b, a)

    # Rounded views of α

    def fixed_alpha(self, bits: int) -> int:
        """Integer A with |α − A/2^bits| ≤ 2^-bits."""
        cached = self._fixed.get(bits)
        if cached is not None:
            return cached
        n = 0
        while self.q(n) * self.q(n + 1) < 2 ** (bits + 1):
            n += 1
        p, q = self.convergent(n)
        value = ((p << bits) + q // 2) // q
        self._fixed[bits] = value
        return value

    @property
    def alpha_float(self) -> float:
        return self.fixed_alpha(96) / 2**96

    def alpha_mp(self, ctx: Any) -> Any:
        bits = ctx.prec + 32
        return ctx.ldexp(ctx.mpf(self.fixed_alpha(bits)), -bits)

    # Serialization

    def to_json(self, convergents: int = 0) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "quotients": list(self.prefix) if self._interval is None else list(self._quotients),
            "tail": self.tail,
            "origin": self.origin,
            "note": self.note,
        }
        if self.period is not None:
            data["period"] = list(self.period)
        if self._interval is not None:
            data["interval"] = [str(self._interval[0]), str(self._interval[1])]
        if convergents:
            data["convergents"] = [
                {"n": n, "p": str(self.p(n)), "q": str(self.q(n))} for n in range(convergents + 1)
            ]
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Frequency":
        interval = None
        if data.get("interval"):
            interval = (Fraction(data["interval"][0]), Fraction(data["interval"][1]))
        return cls(
            data.get("quotients", []),
            period=data.get("period"),
            interval=interval,
            origin=data.get("origin", "from-quotients"),
            note=data.get("note", ""),
        )

    def __repr__(self) -> str:
        shown = ",".join(str(a) for a in self._quotients[:8])
        return f"Frequency([{shown}...], tail={self.tail})"


def _expand_step(lo: Fraction, hi: Fraction, n: int) -> Tuple[int, Tuple[Fraction, Fraction]]:
    inv_lo, inv_hi = 1 / hi, 1 / lo
    a = math.floor(inv_lo)
    if math.floor(inv_hi) != a or a < 1:
        raise PrecisionExhausted(f"quotient {n} cannot be certified at the input precision")
    return a, (inv_lo - a, inv_hi - a)


def _as_fraction(x: Any, digits: Optional[int]) -> Tuple[Fraction, Fraction, int]:
    """Midpoint, radius and digit count for a real input."""
    if isinstance(x, Fraction) or isinstance(x, int):
        return Fraction(x), Fraction(0), 0
    if is_mp(x):
        used = digits if digits is not None else int(x.context.prec * math.log10(2)) - 2
        mid = Fraction(mpmath.nstr(x, used + 8, min_fixed=-math.inf, max_fixed=math.inf))
        return mid, Fraction(1, 10**used), used
    if isinstance(x, str):
        text = x.strip()
        used = digits
        if used is None:
            used = len(text.split(".", 1)[1]) if "." in text else 0
        return Fraction(text), Fraction(1, 10**used), used
    if isinstance(x, Decimal):
        used = digits if digits is not None else max(-x.as_tuple().exponent, 0)
        return Fraction(x), Fraction(1, 10**used), used
    used = 15 if digits is None else digits
    return Fraction(float(x)), Fraction(1, 10**used), used


def cf_expand(x: Any, n_max: int, digits: Optional[int] = None) -> Frequency:
    """Certified partial quotients of a real x ∈ (0, 1).

    ``x`` is a float, decimal string, Decimal or mpmath real known to
    ``digits`` decimal places (inferred when omitted). Exact rationals are
    rejected with NonGeneric; so is an input whose own expansion terminates
    within ``n_max`` quotients.
    """
    if n_max < 1:
        raise PreconditionViolated("n_max must be >= 1")
    mid, radius, used = _as_fraction(x, digits)
    if radius == 0:
        raise NonGeneric(f"x = {mid} is rational", {"x": str(mid)})
    lo, hi = mid - radius, mid + radius
    if not (0 < lo and hi < 1):
        raise PreconditionViolated(f"x must lie in (0, 1) at the stated precision, got {mid}")

    quotients: List[int] = []
    rem = mid
    for n in range(1, n_max + 1):
        inv = 1 / rem
        if inv.denominator == 1:
            raise NonGeneric(
                f"x is rational within precision: expansion ends after {n} quotients",
                {"x": str(mid), "quotients": quotients + [int(inv)]},
            )
        if lo <= 0:
            raise PrecisionExhausted(f"quotient {n} cannot be certified at {used} digits")
        a, (lo, hi) = _expand_step(lo, hi, n)
        rem = inv - a
        quotients.append(a)

    logger.info(f"Certified {n_max} quotients at {used} digits")
    return Frequency(quotients, interval=(lo, hi), origin=f"from-real({used})")


def convergents(freq: Frequency, n: int) -> Tuple[int, int]:
    """(p_n, q_n) of ``freq``."""
    if n < 0:
        raise PreconditionViolated(f"n must be >= 0, got {n}")
    return freq.convergent(n)


# Phases


@dataclass(frozen=True)
class PhaseSpec:
    """Phase θ = (mα + offset)/2, or a real θ known to ``digits`` places.

    The exact form covers every θ with 2θ ∈ αZ + Q; it is completely
    resonant when ``offset`` is an integer.
    """

    m: int = 0
    offset: Fraction = Fraction(0)
    real: Optional[Fraction] = None
    digits: Optional[int] = None

    @classmethod
    def resonant(cls, m: int, l: int = 0) -> "PhaseSpec":
        return cls(int(m), Fraction(int(l)))

    @classmethod
    def from_real(cls, value: Any, digits: Optional[int] = None) -> "PhaseSpec":
        mid, _, used = _as_fraction(value, digits)
        return cls(real=mid, digits=used if used else None)

    @property
    def is_exact(self) -> bool:
        return self.real is None

    @property
    def completely_resonant(self) -> bool:
        return self.real is None and self.offset.denominator == 1

    def linear_form(self) -> Tuple[int, Fraction]:
        """(m, r) with 2θ = mα + r."""
        if self.real is not None:
            return 0, 2 * self.real
        return self.m, Fraction(self.offset)

    def shifted(self, t: int) -> "PhaseSpec":
        """θ + tα."""
        if self.real is not None:
            raise PreconditionViolated("only exact phases can be shifted exactly")
        return PhaseSpec(self.m + 2 * t, self.offset)

    def uncertainty(self) -> Fraction:
        """Bound on |2θ_true − 2θ_stored|."""
        if self.real is None or self.digits is None:
            return Fraction(0)
        return Fraction(2, 10**self.digits)

    def to_json(self) -> Dict[str, Any]:
        if self.real is not None:
            return {"real": str(self.real), "digits": self.digits}
        return {"m": self.m, "offset": str(self.offset)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "PhaseSpec":
        if "real" in data:
            return cls(real=Fraction(data["real"]), digits=data.get("digits"))
        return cls(int(data.get("m", 0)), Fraction(data.get("offset", "0")))

    def describe(self) -> str:
        if self.real is not None:
            return f"theta={float(self.real):.12g}"
        return f"theta=({self.m}*alpha+{self.offset})/2"


CANONICAL_PHASES = {
    (0, 0): PhaseSpec(0, Fraction(0)),
    (0, 1): PhaseSpec(0, Fraction(-1)),
    (1, 0): PhaseSpec(-1, Fraction(0)),
    (1, 1): PhaseSpec(-1, Fraction(-1)),
}


def canonical_phase(theta: PhaseSpec) -> Tuple[PhaseSpec, int]:
    """Reduce a completely resonant θ to one of 0, −1/2, −α/2, −α/2 − 1/2.

    Returns (θ', t) with θ ≡ θ' + tα mod 1.
    """
    if not theta.completely_resonant:
        raise NotCompletelyResonant(f"{theta.describe()} is not completely resonant")
    m, r = theta.m, int(theta.offset)
    if m % 2 == 0:
        return CANONICAL_PHASES[(0, r % 2)], m // 2
    return CANONICAL_PHASES[(1, r % 2)], (m + 1) // 2


def _phase_fixed(freq: Frequency, theta: PhaseSpec, sites: Iterable[int], bits: int) -> List[int]:
    """(θ + xα) mod 1 as integers over 2^(bits+1)."""
    m, r = theta.linear_form()
    alpha = freq.fixed_alpha(bits)
    modulus = 1 << (bits + 1)
    off = round(r * (1 << bits))
    return [((m + 2 * int(x)) * alpha + off) % modulus for x in sites]


def orbit_phases(freq: Frequency, theta: PhaseSpec, sites: Any) -> np.ndarray:
    """θ + xα mod 1 for integer sites, accurate to a few ulps."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size and int(np.max(np.abs(sites))) >= FAST_SITE_LIMIT:
        bits = 64 + int(np.max(np.abs(sites))).bit_length() + 64
        denom = 1 << (bits + 1)
        return np.array([v / denom for v in _phase_fixed(freq, theta, sites.tolist(), bits)])

    base = _phase_fixed(freq, theta, [0], 128)[0] / (1 << 129)
    return float_orbit(freq, base, sites)


def float_orbit(freq: Frequency, base: float, sites: Any) -> np.ndarray:
    """base + xα mod 1 for |x| < 2^26.

    α is split into a 26-bit head, for which x·head is exact, and a small
    tail, so the error does not grow with x.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size and int(np.max(np.abs(sites))) >= FAST_SITE_LIMIT:
        raise PreconditionViolated("float_orbit needs |x| < 2^26")
    bits = 128
    alpha = freq.fixed_alpha(bits)
    high = alpha >> (bits - SPLIT_BITS)
    a_hi = high / 2**SPLIT_BITS
    a_lo = (alpha - (high << (bits - SPLIT_BITS))) / 2**bits

    x = sites.astype(np.float64)
    phases = np.mod(np.mod(x * a_hi, 1.0) + x * a_lo + base, 1.0)
    phases[phases >= 1.0] = 0.0
    return phases


def orbit_phases_mp(freq: Frequency, theta: PhaseSpec, sites: Iterable[int], ctx: Any) -> List[Any]:
    """θ + xα mod 1 as mpmath reals at the precision of ``ctx``."""
    sites = [int(x) for x in sites]
    span = max((abs(x) for x in sites), default=1)
    bits = ctx.prec + 32 + span.bit_length()
    return [ctx.ldexp(ctx.mpf(v), -(bits + 1)) for v in _phase_fixed(freq, theta, sites, bits)]


# Certified distances


def _enclosure(freq: Frequency, k: int, offset: Fraction, fn, start: int) -> Fraction:
    n = start
    for _ in range(MAX_REFINE):
        lo, hi = freq.bracket(n)
        a, b = k * lo + offset, k * hi + offset
        if a > b:
            a, b = b, a
        bounds = fn(a, b)
        if bounds is not None:
            v_lo, v_hi = bounds
            if v_lo > 0 and v_hi - v_lo <= v_lo * CERTIFIED_REL:
                return (v_lo + v_hi) / 2
        n += 1
    raise PrecisionExhausted(f"could not certify |{k}α + {offset}|")


def _dist_bounds(a: Fraction, b: Fraction):
    # ‖·‖ is monotone between consecutive multiples of 1/2
    if math.floor(2 * a) != math.floor(2 * b):
        return None
    da, db = _dist_to_int(a), _dist_to_int(b)
    return (min(da, db), max(da, db))


def _abs_bounds(a: Fraction, b: Fraction):
    if a <= 0 <= b:
        return None
    return (min(abs(a), abs(b)), max(abs(a), abs(b)))


def _start_index(freq: Frequency, k: int) -> int:
    return max(freq.index_above(abs(k)) - 1, 0)


def frac_distance(freq: Frequency, k: int, offset: Fraction = Fraction(0)) -> Fraction:
    """‖kα + offset‖_{R/Z}, certified to relative 2^-64.

    Exactly zero only when k = 0 and the offset is an integer.
    """
    offset = Fraction(offset)
    if k == 0:
        return _dist_to_int(offset)
    return _enclosure(freq, k, offset, _dist_bounds, _start_index(freq, k))


def linear_form_abs(freq: Frequency, k: int, offset: Fraction = Fraction(0)) -> Fraction:
    """|kα + offset| certified to relative 2^-64."""
    offset = Fraction(offset)
    if k == 0:
        return abs(offset)
    return _enclosure(freq, k, offset, _abs_bounds, _start_index(freq, k))


def log_distances(freq: Frequency, ks: Sequence[int], offset: Fraction = Fraction(0)) -> np.ndarray:
    """ln‖kα + offset‖ for each k (−inf where the distance is exactly 0).

    Fast path in fixed point; values too close to an integer to certify are
    recomputed exactly.
    """
    offset = Fraction(offset)
    ks = [int(k) for k in ks]
    if not ks:
        return np.zeros(0)
    k_max = max(abs(k) for k in ks)
    bits = max(
        settings.fixed_point_bits,
        freq.q(freq.index_above(k_max)).bit_length() + k_max.bit_length() + 96,
    )
    alpha = freq.fixed_alpha(bits)
    modulus = 1 << bits
    off = round(offset * modulus)
    margin_bits = 64

    out = np.empty(len(ks))
    for i, k in enumerate(ks):
        x = (k * alpha + off) % modulus
        d = min(x, modulus - x)
        if d >> margin_bits > abs(k) + 1:
            out[i] = _log_ratio(d, bits)
            continue
        exact = frac_distance(freq, k, offset)
        out[i] = -math.inf if exact == 0 else log_fraction(exact)
    return out


def log_sin_pi(log_dist: np.ndarray) -> np.ndarray:
    """ln sin(π d) from ln d for d ∈ [0, 1/2], without underflow."""
    log_dist = np.asarray(log_dist, dtype=np.float64)
    d = np.exp(log_dist)
    with np.errstate(divide="ignore"):
        return math.log(math.pi) + log_dist + np.log(np.sinc(d))


# Resonance exponents


def beta_estimate(freq: Frequency, N: int, n_min: Optional[int] = None) -> float:
    """Finite-scale proxy for β(α): max ln q_{n+1}/q_n over n_min ≤ n ≤ N.

    The default window ⌈N/2⌉ ≤ n ≤ N tracks the limsup; ``n_min=1`` gives the
    plain maximum. This is a lower proxy, not β(α) itself.
    """
    if N < 1:
        raise PreconditionViolated(f"N must be >= 1, got {N}")
    start = max(1, (N + 1) // 2) if n_min is None else max(1, n_min)
    return max(_log_int(freq.q(n + 1)) / freq.q(n) for n in range(start, N + 1))


@dataclass
class ResonanceExponents:
    """Finite truncations of β(α), β_j and δ(α, θ) for one frequency."""

    freq: Frequency

    def beta_upto(self, N: int) -> float:
        """max_{1 ≤ n ≤ N} ln q_{n+1}/q_n (0 for N < 1)."""
        if N < 1:
            return 0.0
        return max(0.0, beta_estimate(self.freq, N, n_min=1))

    def beta_j(self, n: int, j: Any) -> float:
        """(ln q_{n+1} − ln(|j|+1))/q_n."""
        return (_log_int(self.freq.q(n + 1)) - math.log(abs(float(j)) + 1.0)) / self.freq.q(n)

    def delta(self, theta: PhaseSpec, K: int) -> "DeltaEstimate":
        return delta_estimate(self.freq, theta, K)


def resonance_exponents(freq: Frequency) -> ResonanceExponents:
    return ResonanceExponents(freq)


def frequency_with_beta(target_beta: float, depth: int, a1_limit: int = 100_000) -> Frequency:
    """Liouville-type frequency with ln q_{n+1}/q_n ≈ target_beta.

    Rule: a_{n+1} = max(1, round((e^{β q_n} − q_{n−1})/q_n)) for n ≥ 1, so that
    q_{n+1} ≈ e^{β q_n}. a_1 is the least value making every ratio for
    2 ≤ n ≤ depth fall within ±0.05 of the target.
    """
    if target_beta <= 0:
        raise PreconditionViolated("target_beta must be positive")
    if depth < 2:
        raise PreconditionViolated("depth must be >= 2")

    for a1 in range(1, a1_limit + 1):
        quotients = _beta_quotients(target_beta, depth, a1)
        if quotients is not None:
            freq = Frequency(quotients, note=f"beta target {target_beta}")
            logger.info(f"Built frequency with beta {target_beta} (a_1={a1}, depth={depth})")
            return freq
    raise PreconditionViolated(f"no a_1 <= {a1_limit} meets the tolerance for beta {target_beta}")


def _beta_quotients(beta: float, depth: int, a1: int) -> Optional[List[int]]:
    quotients = [a1]
    q_prev, q = 1, a1
    for n in range(1, depth + 1):
        bits = int(beta * q / LN2) + 80
        if bits > settings.integer_budget_bits:
            raise DepthOverflow(
                f"q_{n + 1} needs about {bits} bits, over the budget",
                {"beta": beta, "depth": depth, "n": n},
            )
        ctx = mpmath.mp.clone()
        ctx.prec = bits
        growth = ctx.exp(ctx.mpf(beta) * q)
        a = max(1, int(ctx.nint((growth - q_prev) / q)))
        quotients.append(a)
        q_prev, q = q, a * q + q_prev
        if n >= 2 and abs(_log_int(q) / q_prev - beta) > 0.05:
            return None
    return quotients


@dataclass
class DeltaEstimate:
    """Truncation of δ(α, θ) at cap K."""

    value: float
    argmax_k: int
    K: int
    complete_resonance: bool
    skipped: List[int] = field(default_factory=list)


def delta_estimate(freq: Frequency, theta: PhaseSpec, K: int) -> DeltaEstimate:
    """max over 1 ≤ |k| ≤ K of −ln‖2θ + kα‖/|k|.

    Indices with 2θ + kα ∈ Z (possible only for completely resonant θ) are
    skipped and reported.
    """
    if K < 1:
        raise PreconditionViolated("K must be >= 1")
    m, r = theta.linear_form()
    ks = [k for k in range(-K, K + 1) if k != 0]
    skipped = [k for k in ks if m + k == 0 and r.denominator == 1]
    kept = [k for k in ks if k not in skipped]

    logs = log_distances(freq, [m + k for k in kept], r)
    fuzz = theta.uncertainty()
    if fuzz:
        floor_log = log_fraction(fuzz * 1024)
        if np.any(logs <= floor_log):
            raise PrecisionExhausted(
                f"{theta.describe()} is too close to a resonance for its {theta.digits} digits"
            )

    scores = -logs / np.abs(np.array(kept, dtype=np.float64))
    best = int(np.argmax(scores))
    return DeltaEstimate(
        value=float(scores[best]),
        argmax_k=kept[best],
        K=K,
        complete_resonance=bool(skipped),
        skipped=skipped,
    )


# Diophantine audit


@dataclass
class DiophantineAudit:
    """Convergent bounds 1/(2q_{n+1}) ≤ |q_nα − p_n| ≤ 1/q_{n+1} and best approximation."""

    n: int
    lower: LogScalar
    actual: LogScalar
    upper: LogScalar
    passed: bool
    best_approximation: Optional[bool] = None
    best_min_log: Optional[float] = None
    error: Optional[str] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "lower": self.lower.to_json(),
            "actual": self.actual.to_json(),
            "upper": self.upper.to_json(),
            "pass": self.passed,
            "best_approximation": self.best_approximation,
            "best_min_log": self.best_min_log,
            "error": self.error,
        }


def best_approximation_check(freq: Frequency, n: int, cap: Optional[int] = None) -> Tuple[bool, float]:
    """dist(kα, Z) ≥ |q_nα − p_n| for all 1 ≤ k < q_{n+1}, by enumeration."""
    if n < 1:
        raise PreconditionViolated("the best-approximation property needs n >= 1")
    cap = cap or settings.enumeration_cap
    p_n, q_n = freq.convergent(n)
    q_next = freq.q(n + 1)
    if q_next > cap:
        raise EnumerationCapExceeded(f"q_{n + 1} = {q_next} exceeds the cap {cap}")
    actual = linear_form_abs(freq, q_n, Fraction(-p_n))
    log_actual = log_fraction(actual)

    ks = list(range(1, q_next))
    logs = log_distances(freq, ks)
    passed = True
    for k, value in zip(ks, logs):
        if k == q_n or value >= log_actual + 1e-9:
            continue
        if frac_distance(freq, k) < actual:
            passed = False
            break
    return passed, float(np.min(logs))


def diophantine_audit(freq: Frequency, n: int, cap: Optional[int] = None) -> DiophantineAudit:
    """Bounds check at scale n, plus the enumerated best-approximation check when feasible."""
    if n < 0:
        raise PreconditionViolated("n must be >= 0")
    p_n, q_n = freq.convergent(n)
    q_next = freq.q(n + 1)
    actual = linear_form_abs(freq, q_n, Fraction(-p_n))
    lower, upper = Fraction(1, 2 * q_next), Fraction(1, q_next)

    audit = DiophantineAudit(
        n=n,
        lower=LogScalar.from_real(lower),
        actual=LogScalar.from_real(actual),
        upper=LogScalar.from_real(upper),
        passed=lower <= actual <= upper,
    )
    if n >= 1:
        try:
            audit.best_approximation, audit.best_min_log = best_approximation_check(freq, n, cap)
        except EnumerationCapExceeded as e:
            audit.error = type(e).__name__
            logger.debug(e.message)
    if not audit.passed:
        logger.warning(f"Diophantine bounds fail at n={n} for {freq!r}")
    return audit
