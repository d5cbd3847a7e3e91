"""Extended-range reals and 2×2 matrices.

``LogScalar`` stores a real as (sign, ln|x|); ``ScaledMatrix2`` stores a 2×2
matrix as 2^exponent · entries with the largest entry in [1/2, 1). Together
they hold quantities of size e^{L q_n} for q_n far beyond binary64 range.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Union

import numpy as np

from app.arith.backends import LN2, backend_for, is_mp

CANCELLATION_GAP = 1e-12

Real = Union[float, Any]


@dataclass(frozen=True)
class LogScalar:
    """Sign + log-magnitude real.

    ``logmag`` is a float, or an mpmath real when the value came from the
    high-precision backend. It is ignored when ``sign == 0``.
    """

    sign: int
    logmag: Real = 0.0
    cancelled: bool = False

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")

    # Construction

    @classmethod
    def zero(cls) -> "LogScalar":
        return cls(0, 0.0)

    @classmethod
    def one(cls) -> "LogScalar":
        return cls(1, 0.0)

    @classmethod
    def from_real(cls, x: Real) -> "LogScalar":
        """Wrap a float, int, Fraction or mpmath real."""
        if x == 0:
            return cls.zero()
        sign = 1 if x > 0 else -1
        if is_mp(x):
            backend = backend_for(x)
            return cls(sign, backend.log(abs(x)))
        if isinstance(x, int):
            return cls(sign, math.log(abs(x)))
        if hasattr(x, "numerator") and hasattr(x, "denominator"):
            return cls(sign, math.log(abs(x.numerator)) - math.log(x.denominator))
        return cls(sign, math.log(abs(float(x))))

    @classmethod
    def from_log(cls, logmag: Real, sign: int = 1) -> "LogScalar":
        return cls(sign, logmag)

    # Conversion

    def to_real(self) -> float:
        """Binary64 value; raises OverflowError above the binary64 range."""
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(float(self.logmag))

    @property
    def log_abs(self) -> float:
        """ln|x| as a float, −inf for zero."""
        if self.sign == 0:
            return -math.inf
        return float(self.logmag)

    def is_zero(self) -> bool:
        return self.sign == 0

    def flagged(self, cancelled: bool = True) -> "LogScalar":
        return LogScalar(self.sign, self.logmag, self.cancelled or cancelled)

    # Arithmetic

    def __neg__(self) -> "LogScalar":
        return LogScalar(-self.sign, self.logmag, self.cancelled)

    def __abs__(self) -> "LogScalar":
        return LogScalar(abs(self.sign), self.logmag, self.cancelled)

    def __add__(self, other: "LogScalar") -> "LogScalar":
        return log_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other: "LogScalar") -> "LogScalar":
        return log_add(self, -_coerce(other))

    def __rsub__(self, other: "LogScalar") -> "LogScalar":
        return log_add(_coerce(other), -self)

    def __mul__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        cancelled = self.cancelled or other.cancelled
        if self.sign == 0 or other.sign == 0:
            return LogScalar(0, 0.0, cancelled)
        return LogScalar(self.sign * other.sign, self.logmag + other.logmag, cancelled)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogScalar division by zero")
        cancelled = self.cancelled or other.cancelled
        if self.sign == 0:
            return LogScalar(0, 0.0, cancelled)
        return LogScalar(self.sign * other.sign, self.logmag - other.logmag, cancelled)

    def scale_log(self, delta: Real) -> "LogScalar":
        """Multiply by e^{delta}."""
        if self.sign == 0:
            return self
        return LogScalar(self.sign, self.logmag + delta, self.cancelled)

    # Comparison by value

    def _key(self):
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.logmag)

    def __lt__(self, other: "LogScalar") -> bool:
        return self._key() < _coerce(other)._key()

    def __le__(self, other: "LogScalar") -> bool:
        return self._key() <= _coerce(other)._key()

    def __gt__(self, other: "LogScalar") -> bool:
        return self._key() > _coerce(other)._key()

    def __ge__(self, other: "LogScalar") -> bool:
        return self._key() >= _coerce(other)._key()

    # Serialization

    def to_json(self) -> Dict[str, Any]:
        if self.sign == 0:
            return {"sign": 0, "log": None}
        return {"sign": self.sign, "log": float(self.logmag)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "LogScalar":
        if data["sign"] == 0:
            return cls.zero()
        return cls(int(data["sign"]), float(data["log"]))


def _coerce(value: Any) -> LogScalar:
    if isinstance(value, LogScalar):
        return value
    return LogScalar.from_real(value)


def log_add(a: LogScalar, b: LogScalar) -> LogScalar:
    """a + b by the larger-magnitude pivot formula.

    Opposite signs with log-magnitudes closer than 10^-12 set the
    ``cancelled`` flag; exact equality yields zero.
    """
    cancelled = a.cancelled or b.cancelled
    if a.sign == 0:
        return b.flagged(cancelled)
    if b.sign == 0:
        return a.flagged(cancelled)

    hi, lo = (a, b) if a.logmag >= b.logmag else (b, a)
    backend = backend_for(hi.logmag if is_mp(hi.logmag) else lo.logmag)
    d = lo.logmag - hi.logmag

    if hi.sign == lo.sign:
        return LogScalar(hi.sign, hi.logmag + backend.log1p(backend.exp(d)), cancelled)

    if abs(d) < CANCELLATION_GAP:
        cancelled = True
    if d == 0:
        return LogScalar(0, 0.0, cancelled)
    # ln(1 − e^d) for d < 0
    return LogScalar(hi.sign, hi.logmag + backend.log(-backend.expm1(d)), cancelled)


def log_sum(terms: Sequence[LogScalar]) -> LogScalar:
    """Sum of LogScalars, added left to right."""
    total = LogScalar.zero()
    for term in terms:
        total = log_add(total, term)
    return total


def _normalize(entries: np.ndarray, exponent: int):
    peak = float(np.max(np.abs(entries)))
    if peak == 0.0 or not math.isfinite(peak):
        if not math.isfinite(peak):
            raise OverflowError("non-finite matrix entries")
        return np.zeros((2, 2)), 0
    _, shift = math.frexp(peak)
    return np.ldexp(entries, -shift), exponent + shift


@dataclass(frozen=True, eq=False)
class ScaledMatrix2:
    """2×2 real matrix stored as 2^exponent · entries.

    After normalization the largest |entry| lies in [1/2, 1), so the
    logscale of the true matrix is ``exponent · ln 2``.
    """

    entries: np.ndarray = field(repr=False)
    exponent: int = 0

    @classmethod
    def from_array(cls, array: Any, exponent: int = 0) -> "ScaledMatrix2":
        entries, exponent = _normalize(np.asarray(array, dtype=np.float64).reshape(2, 2), exponent)
        return cls(entries, exponent)

    @classmethod
    def from_scaled(cls, array: Any, logscale: float) -> "ScaledMatrix2":
        """Build from e^{logscale} · array."""
        shift = math.floor(logscale / LN2)
        factor = math.exp(logscale - shift * LN2)
        return cls.from_array(np.asarray(array, dtype=np.float64) * factor, shift)

    @classmethod
    def from_mp(cls, rows: Sequence[Sequence[Any]]) -> "ScaledMatrix2":
        """Convert a 2×2 nested sequence of mpmath reals without overflow."""
        flat = [x for row in rows for x in row]
        peak = max(abs(x) for x in flat)
        if peak == 0:
            return cls.zero()
        ctx = peak.context
        _, shift = ctx.frexp(peak)
        entries = np.array([float(ctx.ldexp(x, -shift)) for x in flat]).reshape(2, 2)
        return cls.from_array(entries, shift)

    @classmethod
    def identity(cls) -> "ScaledMatrix2":
        return cls.from_array(np.eye(2))

    @classmethod
    def zero(cls) -> "ScaledMatrix2":
        return cls(np.zeros((2, 2)), 0)

    @property
    def logscale(self) -> float:
        return self.exponent * LN2

    def is_zero(self) -> bool:
        return not np.any(self.entries)

    def mat_mul(self, other: "ScaledMatrix2") -> "ScaledMatrix2":
        return ScaledMatrix2.from_array(self.entries @ other.entries, self.exponent + other.exponent)

    __matmul__ = mat_mul

    def apply(self, vector: Sequence[LogScalar]) -> tuple:
        """Matrix-vector product on a pair of LogScalars."""
        out = []
        for i in range(2):
            acc = LogScalar.zero()
            for j in range(2):
                acc = log_add(acc, self.entry(i, j) * vector[j])
            out.append(acc)
        return tuple(out)

    def inverse(self, unimodular: bool = False) -> "ScaledMatrix2":
        """Matrix inverse.

        With ``unimodular=True`` the adjugate is returned, which is exact for
        determinant-one products whose normalized determinant underflows.
        """
        (a, b), (c, d) = self.entries
        adjugate = np.array([[d, -b], [-c, a]])
        if unimodular:
            return ScaledMatrix2.from_array(adjugate, self.exponent)
        det = a * d - b * c
        if det == 0.0:
            raise ZeroDivisionError("singular matrix")
        return ScaledMatrix2.from_array(adjugate / det, -self.exponent)

    def __sub__(self, other: "ScaledMatrix2") -> "ScaledMatrix2":
        if self.is_zero():
            return ScaledMatrix2.from_array(-other.entries, other.exponent)
        if other.is_zero():
            return self
        top = max(self.exponent, other.exponent)
        left = np.ldexp(self.entries, self.exponent - top)
        right = np.ldexp(other.entries, other.exponent - top)
        return ScaledMatrix2.from_array(left - right, top)

    def __add__(self, other: "ScaledMatrix2") -> "ScaledMatrix2":
        return self - ScaledMatrix2(-other.entries, other.exponent)

    def log_norm(self) -> float:
        """ln of the spectral norm (largest singular value)."""
        (a, b), (c, d) = self.entries
        sigma = 0.5 * (math.hypot(a + d, c - b) + math.hypot(a - d, b + c))
        if sigma == 0.0:
            return -math.inf
        return math.log(sigma) + self.logscale

    def log_det(self) -> float:
        """ln|det| recovered from the normalized entries."""
        (a, b), (c, d) = self.entries
        det = a * d - b * c
        if det == 0.0:
            return -math.inf
        return math.log(abs(det)) + 2 * self.logscale

    def entry(self, i: int, j: int) -> LogScalar:
        value = float(self.entries[i, j])
        if value == 0.0:
            return LogScalar.zero()
        return LogScalar(1 if value > 0 else -1, math.log(abs(value)) + self.logscale)

    def to_array(self) -> np.ndarray:
        """Dense binary64 matrix; overflows to inf outside the binary64 range."""
        return np.ldexp(self.entries, self.exponent)
