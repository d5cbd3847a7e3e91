"""Restriction determinants and Green's-function edge entries.

P_{[x1,x2]} is computed by the recursion
P_k = (E − v(θ+(k−1)α))P_{k−1} − P_{k−2}, P_0 = 1, P_{−1} = 0,
which equals det(E − H) on the box. With G the resolvent of H − E on the box:

    G(x1, y) = −P_{[y+1,x2]} / P_{[x1,x2]}
    G(y, x2) = −P_{[x1,y−1]} / P_{[x1,x2]}

The empty box has determinant 1.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.arith.backends import LN2, get_backend
from app.arith.cf_arith import float_orbit, orbit_phases, orbit_phases_mp
from app.arith.numerics import LogScalar, log_add, log_sum
from app.core.config import get_settings
from app.core.errors import (
    BudgetExceeded,
    NotAnEigenfunctionLocally,
    NotCompletelyResonant,
    PreconditionViolated,
    Singular,
)
from app.core.logging import get_logger
from app.operator.cocycle import (
    MP_LOG_THRESHOLD,
    OperatorParams,
    SiteFunction,
    shift_cap,
    shift_residual,
    transfer,
)

logger = get_logger(__name__)
settings = get_settings()

NEAR_SINGULAR = 1e-12
EIGEN_TOLERANCE = 1e-8
DENSE_CHECK_MAX = 12


@dataclass
class DeterminantSweep:
    """Determinants of the leading sub-boxes [x1, x1+i−1], i = 0..len."""

    x1: int
    signs: np.ndarray
    logs: np.ndarray
    cancelled: np.ndarray

    def value(self, length: int) -> LogScalar:
        if length == -1:
            return LogScalar.zero()
        sign = int(self.signs[length])
        if sign == 0:
            return LogScalar(0, 0.0, bool(self.cancelled[length]))
        return LogScalar(sign, float(self.logs[length]), bool(self.cancelled[length]))


@dataclass
class BoxDeterminant:
    """P_{[x1,x2]} at a base phase."""

    interval: Tuple[int, int]
    value: LogScalar
    theta_base: str
    cross_check: Optional[float] = None

    @property
    def cancelled(self) -> bool:
        return self.value.cancelled


@dataclass
class GreenBlock:
    """Edge row and column of the resolvent on an interval."""

    interval: Tuple[int, int]
    y: int
    g_left: LogScalar
    g_right: LogScalar
    flags: List[str] = field(default_factory=list)


def _check_interval(x1: int, x2: int) -> None:
    if x2 < x1:
        raise PreconditionViolated(f"empty interval [{x1}, {x2}]")
    if x2 - x1 + 1 > settings.box_budget:
        raise BudgetExceeded(f"box length {x2 - x1 + 1} exceeds the budget {settings.box_budget}")


def _diagonal(
    params: OperatorParams, x1: int, x2: int, phase_override: Optional[float] = None
) -> np.ndarray:
    """E − v at the sites x1..x2."""
    sites = np.arange(x1, x2 + 1)
    if phase_override is None:
        phases = orbit_phases(params.freq, params.theta, sites)
    else:
        phases = float_orbit(params.freq, phase_override, sites)
    return params.energy - params.potential(phases)


def sweep(diag: np.ndarray, x1: int = 0) -> DeterminantSweep:
    """Run the determinant recursion over a diagonal in binary64 with rescaling."""
    n = len(diag)
    signs = np.zeros(n + 1, dtype=np.int8)
    logs = np.zeros(n + 1)
    cancelled = np.zeros(n + 1, dtype=bool)
    signs[0] = 1

    prev, cur, shift = 0.0, 1.0, 0.0
    for i, c in enumerate(diag.tolist(), start=1):
        lead = c * cur
        nxt = lead - prev
        if abs(nxt) < NEAR_SINGULAR * (abs(lead) + abs(prev)):
            cancelled[i] = True
        prev, cur = cur, nxt
        peak = max(abs(cur), abs(prev))
        if peak > 1e150 or peak < 1e-150:
            _, e = math.frexp(peak)
            cur, prev = math.ldexp(cur, -e), math.ldexp(prev, -e)
            shift += e * LN2
        if cur != 0.0:
            signs[i] = 1 if cur > 0 else -1
            logs[i] = math.log(abs(cur)) + shift
    return DeterminantSweep(x1, signs, logs, cancelled)


def sweep_mp(diag: List[Any], ctx: Any) -> List[Any]:
    """The determinant recursion in mpmath; entry i is the leading i-site determinant."""
    out = [ctx.mpf(1)]
    prev, cur = ctx.mpf(0), ctx.mpf(1)
    for c in diag:
        prev, cur = cur, c * cur - prev
        out.append(cur)
    return out


def _mp_value(x: Any, ctx: Any) -> LogScalar:
    if x == 0:
        return LogScalar.zero()
    return LogScalar(1 if x > 0 else -1, float(ctx.log(abs(x))))


def box_det(
    params: OperatorParams,
    interval: Tuple[int, int],
    phase_override: Optional[float] = None,
    mode: Optional[str] = None,
) -> BoxDeterminant:
    """P_{[x1,x2]}; boxes of length ≤ 12 are cross-checked against a dense determinant."""
    x1, x2 = interval
    _check_interval(x1, x2)
    mode = mode or settings.precision_mode
    base = params.theta.describe() if phase_override is None else f"theta={phase_override:.12g}"

    if mode == "mp" and phase_override is None:
        ctx = get_backend("mp").ctx
        phases = orbit_phases_mp(params.freq, params.theta, range(x1, x2 + 1), ctx)
        lam, energy = ctx.mpf(params.lam), ctx.mpf(params.energy)
        diag = [energy - 2 * lam * ctx.cospi(2 * phi) for phi in phases]
        return BoxDeterminant((x1, x2), _mp_value(sweep_mp(diag, ctx)[-1], ctx), base)

    diag = _diagonal(params, x1, x2, phase_override)
    value = sweep(diag, x1).value(len(diag))
    result = BoxDeterminant((x1, x2), value, base)
    if len(diag) <= DENSE_CHECK_MAX:
        dense = float(np.linalg.det(_dense_block(diag)))
        scale = max(abs(dense), 1e-300)
        result.cross_check = abs(value.to_real() - dense) / scale
        if result.cross_check > 1e-8 and not value.cancelled:
            logger.warning(f"Dense cross-check mismatch {result.cross_check:.2e} on [{x1}, {x2}]")
    return result


def _dense_block(diag: np.ndarray) -> np.ndarray:
    """E − H restricted: diagonal ``diag``, off-diagonals −1."""
    n = len(diag)
    block = np.diag(np.asarray(diag, dtype=np.float64))
    if n > 1:
        block -= np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    return block


@dataclass
class BoxProfile:
    """All sub-box determinants of an interval sharing one edge."""

    interval: Tuple[int, int]
    prefix: DeterminantSweep
    suffix: DeterminantSweep

    def left(self, y: int) -> LogScalar:
        """P_{[x1, y−1]}."""
        return self.prefix.value(y - self.interval[0])

    def right(self, y: int) -> LogScalar:
        """P_{[y+1, x2]}."""
        return self.suffix.value(self.interval[1] - y)

    @property
    def full(self) -> LogScalar:
        return self.prefix.value(self.interval[1] - self.interval[0] + 1)


def box_profile(params: OperatorParams, interval: Tuple[int, int]) -> BoxProfile:
    x1, x2 = interval
    _check_interval(x1, x2)
    diag = _diagonal(params, x1, x2)
    return BoxProfile((x1, x2), sweep(diag, x1), sweep(diag[::-1].copy(), x2))


def green_edge_entries(params: OperatorParams, interval: Tuple[int, int], y: int) -> GreenBlock:
    """G(x1, y) and G(y, x2) by Cramer's rule."""
    x1, x2 = interval
    if not x1 <= y <= x2:
        raise PreconditionViolated(f"y = {y} outside [{x1}, {x2}]")
    profile = box_profile(params, interval)
    return _green_from_profile(profile, y)


def _green_from_profile(profile: BoxProfile, y: int) -> GreenBlock:
    full = profile.full
    if full.is_zero():
        raise Singular(
            f"E is an eigenvalue of the restriction to {list(profile.interval)}",
            {"interval": list(profile.interval)},
        )
    flags = []
    g_left = -(profile.right(y) / full)
    g_right = -(profile.left(y) / full)
    if full.cancelled:
        flags.append("near_singular_box")
    if g_left.cancelled or g_right.cancelled:
        flags.append("cancellation")
    return GreenBlock(profile.interval, y, g_left, g_right, flags)


def _equation_residual(params: OperatorParams, phi: SiteFunction, x1: int, x2: int) -> float:
    """Worst relative residual of φ(x+1) + φ(x−1) + v(x)φ(x) − Eφ(x) on [x1, x2]."""
    v = params.site_potential(np.arange(x1, x2 + 1))
    worst = 0.0
    for i, x in enumerate(range(x1, x2 + 1)):
        center = phi.value(x)
        terms = [phi.value(x + 1), phi.value(x - 1), center * (float(v[i]) - params.energy)]
        total = log_sum(terms)
        scale = log_sum([abs(t) for t in terms])
        if scale.is_zero():
            continue
        if not total.is_zero():
            worst = max(worst, math.exp(total.log_abs - scale.log_abs))
    return worst


def block_terms(
    params: OperatorParams, phi: SiteFunction, interval: Tuple[int, int], y: int
) -> Tuple[LogScalar, LogScalar, LogScalar]:
    """(φ(y), G(x1,y)φ(x1−1), G(y,x2)φ(x2+1)) after validating the eigen-equation."""
    x1, x2 = interval
    if not phi.covers(x1 - 1, x2 + 1):
        raise PreconditionViolated("phi must be defined on [x1 - 1, x2 + 1]")
    residual = _equation_residual(params, phi, x1, x2)
    if residual > EIGEN_TOLERANCE:
        raise NotAnEigenfunctionLocally(
            f"H phi = E phi fails on [{x1}, {x2}] (relative residual {residual:.2e})",
            {"interval": [x1, x2], "residual": residual},
        )
    green = green_edge_entries(params, interval, y)
    return phi.value(y), green.g_left * phi.value(x1 - 1), green.g_right * phi.value(x2 + 1)


def block_identity_residual(
    params: OperatorParams, phi: SiteFunction, interval: Tuple[int, int], y: int
) -> LogScalar:
    """|φ(y) + G(x1,y)φ(x1−1) + G(y,x2)φ(x2+1)|."""
    center, left, right = block_terms(params, phi, interval, y)
    return abs(log_sum([center, left, right]))


def block_expansion_bound(
    params: OperatorParams, phi: SiteFunction, interval: Tuple[int, int], y: int
) -> Dict[str, Any]:
    """|φ(y)| ≤ |G(x1,y)||φ(x1−1)| + |G(y,x2)||φ(x2+1)|."""
    center, left, right = block_terms(params, phi, interval, y)
    bound = log_add(abs(left), abs(right))
    measured = abs(center)
    slack = 1e-9
    passed = measured.is_zero() or (not bound.is_zero() and measured.log_abs <= bound.log_abs + slack)
    return {
        "interval": list(interval),
        "y": y,
        "measured_log": measured.to_json()["log"],
        "bound_log": bound.to_json()["log"],
        "pass": passed,
    }


def transfer_identity_residual(params: OperatorParams, k: int, start: int = 0) -> float:
    """Largest relative entry error between A_k and its determinant form.

    A_k(θ) = [[P_k(θ), −P_{k−1}(θ+α)], [P_{k−1}(θ), −P_{k−2}(θ+α)]] with
    P_k(θ) = P_{[0,k−1]}(θ), here based at θ + start·α.
    """
    if k < 1:
        raise PreconditionViolated("k must be >= 1")
    diag = _diagonal(params, start, start + k - 1)
    at_theta = sweep(diag, start)
    at_next = sweep(diag[1:].copy(), start + 1)
    expected = [
        [at_theta.value(k), -at_next.value(k - 1)],
        [at_theta.value(k - 1), -at_next.value(k - 2)],
    ]
    matrix = transfer(params, k, start=start).matrix
    worst = 0.0
    for i in range(2):
        for j in range(2):
            got, want = matrix.entry(i, j), expected[i][j]
            if got.is_zero() and want.is_zero():
                continue
            ref = max(got.log_abs, want.log_abs)
            gap = got - want
            if not gap.is_zero():
                worst = max(worst, math.exp(gap.log_abs - ref))
    return worst


def _require_resonant(params: OperatorParams) -> None:
    if not params.theta.completely_resonant:
        raise NotCompletelyResonant(f"{params.theta.describe()} does not satisfy 2θ ∈ αZ + Z")


@dataclass
class BoundRecord:
    """One measured log-magnitude against its claimed bound."""

    name: str
    interval: Tuple[int, int]
    measured_log: float
    bound_log: float
    passed: bool
    flags: List[str] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "interval": list(self.interval),
            "measured_log": None if math.isinf(self.measured_log) else self.measured_log,
            "bound_log": self.bound_log,
            "pass": self.passed,
            "flags": self.flags,
        }


def _record(name: str, det: BoxDeterminant, bound_log: float) -> BoundRecord:
    measured = det.value.log_abs
    flags = ["cancellation"] if det.cancelled else []
    return BoundRecord(name, det.interval, measured, bound_log, measured <= bound_log, flags)


def klem2_audit(
    params: OperatorParams,
    x: int,
    p1: int,
    p2: int,
    n: int,
    epsilon: float,
    C: Optional[float] = None,
) -> List[BoundRecord]:
    """Determinant bounds on [−x, p1], [−p1, x] and [−x, p2] near q_n/2 and q_n.

    Claimed: L(q_n/2 − x) + Cεq_n for the first two, L(q_n − x) + Cεq_n for
    the third.
    """
    C = settings.default_c if C is None else C
    _require_resonant(params)
    q_n = params.freq.q(n)
    if not 0 <= 4 * x <= q_n:
        raise PreconditionViolated(f"x must satisfy 0 <= x <= q_n/4 = {q_n / 4}, got {x}")
    if abs(p1 - q_n / 2) > 20 * epsilon * q_n:
        raise PreconditionViolated(f"p1 = {p1} is not within 20 eps q_n of q_n/2")
    if abs(p2 - q_n) > 20 * epsilon * q_n:
        raise PreconditionViolated(f"p2 = {p2} is not within 20 eps q_n of q_n")

    L = params.L
    slack = C * epsilon * q_n
    records = [
        _record("left_half", box_det(params, (-x, p1)), L * (q_n / 2 - x) + slack),
        _record("mirrored_half", box_det(params, (-p1, x)), L * (q_n / 2 - x) + slack),
        _record("full", box_det(params, (-x, p2)), L * (q_n - x) + slack),
    ]
    for rec in records:
        if not rec.passed:
            logger.warning(
                f"Determinant bound fails on {rec.interval}: {rec.measured_log:.3f} > {rec.bound_log:.3f} "
                f"(n={n}, E={params.energy})"
            )
    return records


def numerator_bound_audit(
    params: OperatorParams,
    interval: Tuple[int, int],
    epsilon: float,
    min_length: Optional[int] = None,
) -> Dict[str, Any]:
    """|P_{[x1,x2]}| ≤ e^{(L+ε)|x2−x1|}; intervals below the minimum length are exempt."""
    min_length = settings.numerator_min_length if min_length is None else min_length
    x1, x2 = interval
    length = x2 - x1 + 1
    if length < min_length:
        return {"interval": [x1, x2], "exempt": True, "pass": None, "measured_log": None, "bound_log": None}
    det = box_det(params, interval)
    bound = (params.L + epsilon) * abs(x2 - x1)
    rec = _record("numerator", det, bound)
    return {**rec.to_json(), "exempt": False}


def klem1_entry_audit(
    params: OperatorParams, k: int, j: int, n: int, epsilon: float
) -> Dict[str, Any]:
    """|P_k(θ) − P_k(θ + jq_nα)| ≤ e^{(L+ε)k} j/q_{n+1}."""
    q_n, q_next = params.freq.q(n), params.freq.q(n + 1)
    cap = shift_cap(params.freq, n)
    if not 0 < k <= 10 * q_n or not 0 <= j <= cap:
        raise PreconditionViolated(f"need 0 < k <= 10 q_n and 0 <= j <= {cap}")
    L = params.L
    if j == 0:
        return {"k": k, "j": 0, "n": n, "measured_log": None, "bound_log": None, "pass": True, "mode": "exact"}
    bound = (L + epsilon) * k + math.log(j) - math.log(q_next)
    delta = j * shift_residual(params.freq, n)

    if k * L <= MP_LOG_THRESHOLD and q_next < 10**8:
        phases = orbit_phases(params.freq, params.theta, np.arange(k))
        a = sweep(params.energy - params.potential(phases)).value(k)
        b = sweep(params.energy - params.potential(np.mod(phases + float(delta), 1.0))).value(k)
        gap = a - b
        mode = "binary64"
        measured = gap.log_abs
        flags = ["cancellation"] if gap.cancelled else []
    else:
        measured, mode, flags = _klem1_mp(params, k, delta), "mp", []

    return {
        "k": k,
        "j": j,
        "n": n,
        "measured_log": None if math.isinf(measured) else measured,
        "bound_log": bound,
        "pass": measured <= bound,
        "mode": mode,
        "flags": flags,
    }


def _klem1_mp(params: OperatorParams, k: int, delta: Fraction) -> float:
    ctx = get_backend("mp").ctx
    phases = orbit_phases_mp(params.freq, params.theta, range(k), ctx)
    d = ctx.mpf(delta.numerator) / delta.denominator
    lam, energy = ctx.mpf(params.lam), ctx.mpf(params.energy)
    a = sweep_mp([energy - 2 * lam * ctx.cospi(2 * phi) for phi in phases], ctx)[-1]
    b = sweep_mp([energy - 2 * lam * ctx.cospi(2 * (phi + d)) for phi in phases], ctx)[-1]
    gap = abs(a - b)
    return -math.inf if gap == 0 else float(ctx.log(gap))
