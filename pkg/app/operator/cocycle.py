"""Schrödinger cocycle of the almost Mathieu operator.

One-step matrices A(φ) = [[E − 2λcos2πφ, −1], [1, 0]], k-step products
A_k(θ) = A(θ+(k−1)α)⋯A(θ), solution propagation, Lyapunov estimates and
the Gordon-type shift and telescoping bounds.
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.arith.backends import LN2, get_backend
from app.arith.cf_arith import (
    Frequency,
    PhaseSpec,
    beta_estimate,
    float_orbit,
    linear_form_abs,
    orbit_phases,
    orbit_phases_mp,
)
from app.arith.numerics import LogScalar, ScaledMatrix2
from app.core.config import get_settings
from app.core.errors import (
    BudgetExceeded,
    HypothesisViolated,
    PrecisionExhausted,
    PreconditionViolated,
)
from app.core.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

# renormalize the running product once entries pass 2^RESCALE_BITS
RESCALE_BITS = 500
RESCALE = 2.0**-RESCALE_BITS
BATCH_RENORM_EVERY = 16
MP_LOG_THRESHOLD = 600.0


@dataclass
class OperatorParams:
    """(λ, α, θ, E) for one operator instance.

    λ = 0 (the free operator) is accepted; anything that needs L = ln|λ|
    rejects it.
    """

    lam: float
    freq: Frequency
    theta: PhaseSpec
    energy: float

    @property
    def L(self) -> float:
        """ln|λ|, the Lyapunov exponent on the spectrum for |λ| > 1."""
        if self.lam == 0:
            raise PreconditionViolated("ln|lambda| is undefined for lambda = 0")
        return math.log(abs(self.lam))

    def with_energy(self, energy: float) -> "OperatorParams":
        return replace(self, energy=energy)

    def with_theta(self, theta: PhaseSpec) -> "OperatorParams":
        return replace(self, theta=theta)

    def potential(self, phases: np.ndarray) -> np.ndarray:
        """v = 2λcos2πφ on an array of phases."""
        return 2.0 * self.lam * np.cos(2.0 * np.pi * np.asarray(phases))

    def site_potential(self, sites: Any) -> np.ndarray:
        """v(θ + xα) at integer sites."""
        return self.potential(orbit_phases(self.freq, self.theta, sites))

    def regime_margin(self, depth: int) -> float:
        """ln|λ| − 2·beta_estimate at the working depth."""
        return self.L - 2.0 * beta_estimate(self.freq, depth)

    def check_regime(self, depth: int) -> bool:
        """Warn when ln|λ| ≤ 2β at the working depth."""
        margin = self.regime_margin(depth)
        if margin <= 0:
            logger.warning(
                f"Outside the localization regime: ln|lambda| - 2*beta = {margin:.4f} "
                f"(lambda={self.lam}, depth={depth})"
            )
            return False
        return True

    def describe(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "energy": self.energy,
            "theta": self.theta.to_json(),
            "frequency": self.freq.to_json(),
        }


@dataclass
class TransferProduct:
    """A_k at base phase, as a scaled matrix."""

    k: int
    base_phase: float
    matrix: ScaledMatrix2

    def log_norm(self) -> float:
        return self.matrix.log_norm()


@dataclass
class SiteFunction:
    """Real function on an integer range in sign + log-magnitude form."""

    start: int
    signs: np.ndarray
    logs: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_values(cls, start: int, values: Any, log_shift: float = 0.0) -> "SiteFunction":
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(divide="ignore"):
            logs = np.log(np.abs(values)) + log_shift
        return cls(start, np.sign(values).astype(np.int8), logs)

    @property
    def stop(self) -> int:
        """Last site (inclusive)."""
        return self.start + len(self.logs) - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.start, self.stop + 1)

    def __len__(self) -> int:
        return len(self.logs)

    def covers(self, lo: int, hi: int) -> bool:
        return self.start <= lo and hi <= self.stop

    def index(self, x: int) -> int:
        if not self.start <= x <= self.stop:
            raise IndexError(f"site {x} outside [{self.start}, {self.stop}]")
        return x - self.start

    def value(self, x: int) -> LogScalar:
        i = self.index(x)
        sign = int(self.signs[i])
        if sign == 0:
            return LogScalar.zero()
        return LogScalar(sign, float(self.logs[i]))

    def log_abs(self, x: int) -> float:
        i = self.index(x)
        return float(self.logs[i]) if self.signs[i] != 0 else -math.inf

    def log_abs_array(self) -> np.ndarray:
        return np.where(self.signs != 0, self.logs, -np.inf)

    def window_max_log(self, lo: int, hi: int) -> float:
        """max ln|φ(x)| over lo ≤ x ≤ hi."""
        part = self.log_abs_array()[self.index(lo) : self.index(hi) + 1]
        return float(np.max(part)) if part.size else -math.inf

    def to_float(self) -> np.ndarray:
        """Binary64 values (tiny values underflow to 0)."""
        with np.errstate(over="ignore", under="ignore"):
            return np.where(self.signs != 0, self.signs * np.exp(self.logs), 0.0)

    def normalized_at(self, x0: int) -> "SiteFunction":
        """Rescale so that φ(x0) = 1."""
        ref = self.value(x0)
        if ref.is_zero():
            raise PreconditionViolated(f"cannot normalize at a zero of the function (site {x0})")
        return SiteFunction(self.start, (self.signs * ref.sign).astype(np.int8), self.logs - ref.logmag, dict(self.meta))

    def recentered(self, center: int) -> "SiteFunction":
        """Same values with site ``center`` relabeled as 0."""
        return SiteFunction(self.start - center, self.signs.copy(), self.logs.copy(), dict(self.meta))

    def restrict(self, lo: int, hi: int) -> "SiteFunction":
        i, j = self.index(lo), self.index(hi)
        return SiteFunction(lo, self.signs[i : j + 1].copy(), self.logs[i : j + 1].copy(), dict(self.meta))

    def rows(self) -> List[Dict[str, Any]]:
        """CSV rows: site, amplitude_sign, amplitude_log."""
        out = []
        for x, s, lg in zip(self.sites.tolist(), self.signs.tolist(), self.logs.tolist()):
            out.append({"site": x, "amplitude_sign": s, "amplitude_log": lg if s != 0 else ""})
        return out


def step_matrix(params: OperatorParams, phase: float) -> np.ndarray:
    """A(φ) = [[E − 2λcos2πφ, −1], [1, 0]]."""
    a = params.energy - 2.0 * params.lam * math.cos(2.0 * math.pi * phase)
    return np.array([[a, -1.0], [1.0, 0.0]])


def _product(params: OperatorParams, phases: np.ndarray) -> ScaledMatrix2:
    """A(φ_{k−1})⋯A(φ_0) with periodic power-of-two rescaling."""
    diag = (params.energy - params.potential(phases)).tolist()
    m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
    exponent = 0
    for a in diag:
        m00, m01, m10, m11 = a * m00 - m10, a * m01 - m11, m00, m01
        if abs(m00) > 1e150 or abs(m01) > 1e150:
            m00, m01, m10, m11 = m00 * RESCALE, m01 * RESCALE, m10 * RESCALE, m11 * RESCALE
            exponent += RESCALE_BITS
    return ScaledMatrix2.from_array([[m00, m01], [m10, m11]], exponent)


def _product_mp(params: OperatorParams, phases: Sequence[Any], ctx: Any) -> List[List[Any]]:
    lam, energy = ctx.mpf(params.lam), ctx.mpf(params.energy)
    m00, m01, m10, m11 = ctx.mpf(1), ctx.mpf(0), ctx.mpf(0), ctx.mpf(1)
    for phi in phases:
        a = energy - 2 * lam * ctx.cospi(2 * phi)
        m00, m01, m10, m11 = a * m00 - m10, a * m01 - m11, m00, m01
    return [[m00, m01], [m10, m11]]


def _check_budget(k: int) -> None:
    if abs(k) > settings.transfer_budget:
        raise BudgetExceeded(f"|k| = {abs(k)} exceeds the transfer budget {settings.transfer_budget}")


def transfer(
    params: OperatorParams, k: int, phase: Optional[float] = None, start: int = 0
) -> TransferProduct:
    """A_k at ``phase`` (default θ + start·α, evaluated exactly).

    k = 0 gives the identity; for k < 0, A_k(φ) = A_{−k}(φ + kα)^{-1}.
    """
    _check_budget(k)
    if phase is None:
        base = float(orbit_phases(params.freq, params.theta, [start])[0])
        span = range(start + min(k, 0), start + max(k, 0))
        phases = orbit_phases(params.freq, params.theta, np.arange(span.start, span.stop))
    else:
        base = phase
        span = range(min(k, 0), max(k, 0))
        phases = float_orbit(params.freq, phase, np.arange(span.start, span.stop))

    if k == 0:
        return TransferProduct(0, base, ScaledMatrix2.identity())
    matrix = _product(params, phases)
    if k < 0:
        matrix = matrix.inverse(unimodular=True)
    return TransferProduct(k, base, matrix)


def transfer_mp(params: OperatorParams, k: int, start: int = 0, ctx: Any = None) -> List[List[Any]]:
    """A_k(θ + start·α) for k ≥ 1 as an mpmath matrix."""
    _check_budget(k)
    if k < 1:
        raise PreconditionViolated("transfer_mp needs k >= 1")
    ctx = ctx or get_backend("mp").ctx
    phases = orbit_phases_mp(params.freq, params.theta, range(start, start + k), ctx)
    return _product_mp(params, phases, ctx)


def transfer_batch(params: OperatorParams, k: int, phases: np.ndarray) -> np.ndarray:
    """ln‖A_k(θ_s)‖ for a vector of base phases, vectorized over θ_s."""
    _check_budget(k)
    base = np.asarray(phases, dtype=np.float64)
    count = base.size
    if k == 0:
        return np.zeros(count)
    shifts = float_orbit(params.freq, 0.0, np.arange(k))
    # rows of the running product
    r0 = np.tile([1.0, 0.0], (count, 1))
    r1 = np.tile([0.0, 1.0], (count, 1))
    logscale = np.zeros(count)
    for step, shift in enumerate(shifts, start=1):
        a = params.energy - params.potential(np.mod(base + shift, 1.0))
        r0, r1 = a[:, None] * r0 - r1, r0
        if step % BATCH_RENORM_EVERY == 0:
            peak = np.maximum(np.max(np.abs(r0), axis=1), np.max(np.abs(r1), axis=1))
            r0 = r0 / peak[:, None]
            r1 = r1 / peak[:, None]
            logscale += np.log(peak)
    m00, m01, m10, m11 = r0[:, 0], r0[:, 1], r1[:, 0], r1[:, 1]
    sigma = 0.5 * (np.hypot(m00 + m11, m10 - m01) + np.hypot(m00 - m11, m01 + m10))
    return np.log(sigma) + logscale


def propagate(
    params: OperatorParams, pair: Tuple[Any, Any], m: int, k: int
) -> Tuple[LogScalar, LogScalar]:
    """(φ(m+k), φ(m+k−1)) = A_k(θ + mα)(φ(m), φ(m−1)); k may be negative."""
    vector = tuple(v if isinstance(v, LogScalar) else LogScalar.from_real(v) for v in pair)
    product = transfer(params, k, start=m)
    return product.matrix.apply(vector)


def solve_recursion(
    params: OperatorParams, phi0: float, phi_m1: float, lo: int, hi: int
) -> SiteFunction:
    """Solution of Hφ = Eφ on [lo, hi] from (φ(0), φ(−1)), in log form.

    Runs the three-term recursion outward from the pair with periodic
    rescaling, so amplitudes far outside the binary64 range are kept.
    """
    if not lo <= -1 < 0 <= hi:
        raise PreconditionViolated("range must contain sites -1 and 0")
    v = params.site_potential(np.arange(lo, hi + 1))
    values = np.zeros(hi - lo + 1)
    shifts = np.zeros(hi - lo + 1)
    i0 = -lo
    values[i0], values[i0 - 1] = phi0, phi_m1

    # forward: φ(n+1) = (E − v(n))φ(n) − φ(n−1)
    cur, prev, shift = phi0, phi_m1, 0.0
    for i in range(i0, hi - lo):
        cur, prev = (params.energy - v[i]) * cur - prev, cur
        if abs(cur) > 1e150:
            cur, prev, shift = cur * RESCALE, prev * RESCALE, shift + RESCALE_BITS * LN2
        values[i + 1], shifts[i + 1] = cur, shift

    # backward: φ(n−1) = (E − v(n))φ(n) − φ(n+1)
    cur, nxt, shift = phi_m1, phi0, 0.0
    for i in range(i0 - 1, 0, -1):
        cur, nxt = (params.energy - v[i]) * cur - nxt, cur
        if abs(cur) > 1e150:
            cur, nxt, shift = cur * RESCALE, nxt * RESCALE, shift + RESCALE_BITS * LN2
        values[i - 1], shifts[i - 1] = cur, shift

    func = SiteFunction.from_values(lo, values)
    func.logs = func.logs + shifts
    return func


@dataclass
class LyapunovEstimate:
    """Mean of (1/k)ln‖A_k(θ_i)‖ over equidistributed θ_i."""

    energy: float
    k: int
    mean: float
    per_theta: List[Dict[str, float]]


def lyapunov(
    params: OperatorParams, k: int, samples: int, thetas: Optional[Sequence[float]] = None
) -> LyapunovEstimate:
    """Finite-k Lyapunov estimate at θ_i = (i + 1/2)/samples, or at the given phases."""
    if k < 1 or samples < 1:
        raise PreconditionViolated("k and samples must be >= 1")
    if thetas is None:
        thetas = (np.arange(samples) + 0.5) / samples
    else:
        thetas = np.asarray(thetas, dtype=np.float64)
        if thetas.shape != (samples,):
            raise PreconditionViolated(f"expected {samples} phases, got {thetas.size}")
    log_norms = transfer_batch(params, k, thetas)
    estimates = log_norms / k
    mean = float(np.sum(estimates) / samples)
    per_theta = [
        {"theta": float(t), "log_norm": float(ln), "estimate": float(est)}
        for t, ln, est in zip(thetas, log_norms, estimates)
    ]
    return LyapunovEstimate(params.energy, k, mean, per_theta)


def lyapunov_sup_audit(
    params: OperatorParams, ks: Sequence[int], samples: int, epsilon: float
) -> Dict[str, Any]:
    """Finite-k upper bound max_θ (1/k)ln‖A_k(θ)‖ ≤ L + ε over sampled θ.

    Reports the empirical threshold K₀: the least audited k from which the
    bound holds for every larger audited k (None if it fails at the largest).
    """
    thetas = (np.arange(samples) + 0.5) / samples
    bound = params.L + epsilon
    rows = []
    for k in sorted(ks):
        sup = float(np.max(transfer_batch(params, k, thetas)) / k)
        rows.append({"k": k, "sup": sup, "bound": bound, "pass": sup <= bound})

    threshold = None
    for row in reversed(rows):
        if not row["pass"]:
            break
        threshold = row["k"]
    if threshold is None:
        logger.warning(f"Lyapunov sup bound fails at the largest k for E={params.energy}")
    return {"energy": params.energy, "epsilon": epsilon, "rows": rows, "empirical_k0": threshold}


def _log_pair_norm(a: LogScalar, b: LogScalar) -> float:
    return 0.5 * float(np.logaddexp(2 * a.log_abs, 2 * b.log_abs))


def propagation_audit(
    params: OperatorParams, phi: SiteFunction, k1: int, k2: int, epsilon: float
) -> Dict[str, Any]:
    """‖(φ(k1+1), φ(k1))‖ ≤ e^{(L+ε)|k1−k2|}‖(φ(k2+1), φ(k2))‖."""
    lhs = _log_pair_norm(phi.value(k1 + 1), phi.value(k1))
    rhs = (params.L + epsilon) * abs(k1 - k2) + _log_pair_norm(phi.value(k2 + 1), phi.value(k2))
    return {"k1": k1, "k2": k2, "measured_log": lhs, "bound_log": rhs, "pass": lhs <= rhs}


@dataclass
class ShiftAudit:
    """‖A_k(θ) − A_k(θ + jq_nα)‖ against e^{(L+ε)k} j/q_{n+1}."""

    k: int
    j: int
    n: int
    measured: LogScalar
    bound: LogScalar
    passed: bool
    mode: str

    def to_json(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "j": self.j,
            "n": self.n,
            "measured_log": self.measured.to_json()["log"],
            "bound_log": self.bound.to_json()["log"],
            "pass": self.passed,
            "mode": self.mode,
        }


def shift_cap(freq: Frequency, n: int, C: Optional[float] = None) -> int:
    """Largest audited shift j ≈ C q_{n+1}/q_n + C."""
    C = settings.default_c if C is None else C
    return int(C * freq.q(n + 1) / freq.q(n) + C)


def shift_residual(freq: Frequency, n: int) -> Fraction:
    """q_nα − p_n, exactly signed."""
    p, q = freq.convergent(n)
    magnitude = linear_form_abs(freq, q, Fraction(-p))
    return magnitude if n % 2 == 0 else -magnitude


def shift_difference(
    params: OperatorParams,
    k: int,
    j: int,
    n: int,
    epsilon: float,
    cap: Optional[int] = None,
) -> ShiftAudit:
    """Gordon shift bound for the k-step transfer matrix.

    The shifted phases are θ + iα + j(q_nα − p_n), using the exact residual.
    Products with k·L above 600 run in the high-precision backend.
    """
    q_n, q_next = params.freq.q(n), params.freq.q(n + 1)
    cap = shift_cap(params.freq, n) if cap is None else cap
    if not 0 < k <= 10 * q_n:
        raise PreconditionViolated(f"k must satisfy 0 < k <= 10 q_n = {10 * q_n}, got {k}")
    if not 0 <= j <= cap:
        raise PreconditionViolated(f"j must satisfy 0 <= j <= {cap}, got {j}")

    L = params.L
    bound = LogScalar(1, (L + epsilon) * k + math.log(j) - math.log(q_next)) if j else LogScalar.zero()
    if j == 0:
        return ShiftAudit(k, j, n, LogScalar.zero(), bound, True, "exact")

    delta = j * shift_residual(params.freq, n)
    if k * L <= MP_LOG_THRESHOLD and q_next < 10**8:
        phases = orbit_phases(params.freq, params.theta, np.arange(k))
        shifted = np.mod(phases + float(delta), 1.0)
        diff = _product(params, phases) - _product(params, shifted)
        measured = LogScalar.zero() if diff.is_zero() else LogScalar(1, diff.log_norm())
        mode = "binary64"
    else:
        measured = _shift_difference_mp(params, k, delta)
        mode = "mp"

    passed = measured <= bound
    if not passed:
        logger.warning(f"Shift bound fails: k={k}, j={j}, n={n}, lambda={params.lam}, E={params.energy}")
    return ShiftAudit(k, j, n, measured, bound, passed, mode)


def _shift_difference_mp(params: OperatorParams, k: int, delta: Fraction) -> LogScalar:
    backend = get_backend("mp")
    ctx = backend.ctx
    phases = orbit_phases_mp(params.freq, params.theta, range(k), ctx)
    d = ctx.mpf(delta.numerator) / delta.denominator
    a = _product_mp(params, phases, ctx)
    b = _product_mp(params, [phi + d for phi in phases], ctx)
    diff = [[a[i][c] - b[i][c] for c in range(2)] for i in range(2)]
    size = max(abs(x) for row in a for x in row)
    gap = max(abs(x) for row in diff for x in row)
    if gap == 0 or ctx.log(size / gap, 2) > ctx.prec - 20:
        raise PrecisionExhausted(f"difference below {ctx.prec}-bit resolution at k={k}")
    return LogScalar(1, ScaledMatrix2.from_mp(diff).log_norm())


def window_growth(A_seq: Sequence[Any], d: float) -> float:
    """max over windows of ln‖A^{k+j−1}⋯A^k‖ − dj."""
    mats = [ScaledMatrix2.from_array(a) for a in A_seq]
    worst = -math.inf
    for start in range(len(mats)):
        prod = ScaledMatrix2.identity()
        for length in range(1, len(mats) - start + 1):
            prod = mats[start + length - 1] @ prod
            worst = max(worst, prod.log_norm() - d * length)
    return worst


@dataclass
class TelescopingAudit:
    """Norm of a perturbed product minus the unperturbed one, against its bound."""

    lhs: LogScalar
    rhs: LogScalar
    passed: bool
    window_max_excess: float

    def to_json(self) -> Dict[str, Any]:
        return {
            "lhs": self.lhs.to_json(),
            "rhs": self.rhs.to_json(),
            "pass": self.passed,
            "window_max_excess": self.window_max_excess,
        }


def telescoping_bound(
    A_seq: Sequence[Any], B_seq: Sequence[Any], D: float, d: float
) -> TelescopingAudit:
    """‖(A^n+B^n)⋯(A^1+B^1) − A^n⋯A^1‖ ≤ De^{dn}(∏(1 + De^{−d}‖B^j‖) − 1).

    The hypothesis ‖A^{k+j−1}⋯A^k‖ ≤ De^{dj} is checked over all windows
    first.
    """
    if len(A_seq) != len(B_seq) or not A_seq:
        raise PreconditionViolated("A_seq and B_seq must be non-empty and of equal length")
    if D <= 0:
        raise PreconditionViolated("D must be positive")
    n = len(A_seq)
    log_D = math.log(D)
    worst = window_growth(A_seq, d) - log_D
    if worst > 1e-12:
        raise HypothesisViolated(
            f"window growth exceeds D e^(d j) by e^{worst:.3g}", {"D": D, "d": d}
        )

    perturbed = ScaledMatrix2.identity()
    plain = ScaledMatrix2.identity()
    for a, b in zip(A_seq, B_seq):
        perturbed = ScaledMatrix2.from_array(np.asarray(a) + np.asarray(b)) @ perturbed
        plain = ScaledMatrix2.from_array(a) @ plain
    diff = perturbed - plain
    lhs = LogScalar.zero() if diff.is_zero() else LogScalar(1, diff.log_norm())

    growth = sum(math.log1p(D * math.exp(-d) * float(np.linalg.norm(np.asarray(b), 2))) for b in B_seq)
    rhs = LogScalar.zero() if growth == 0 else LogScalar(1, log_D + d * n + math.log(math.expm1(growth)))
    # rounding allowance for the equality cases
    passed = lhs.is_zero() or (not rhs.is_zero() and lhs.log_abs <= rhs.log_abs + 1e-12)
    return TelescopingAudit(lhs, rhs, passed, worst)
