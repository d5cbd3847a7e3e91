"""Finite truncations of the almost Mathieu operator.

Dirichlet truncations on [−N, N], their eigenpairs, eigenfunction tails
below binary64 range, generalized eigenfunctions built from the transfer
recursion, decay-rate fits and θ-sampled spectra.
"""

import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from app.arith.backends import LN2
from app.arith.cf_arith import Frequency, PhaseSpec, orbit_phases
from app.core.config import get_settings
from app.core.errors import (
    BudgetExceeded,
    NoTemperateDirection,
    PreconditionViolated,
    WindowTooSmall,
)
from app.core.logging import get_logger
from app.operator.cocycle import (
    RESCALE,
    RESCALE_BITS,
    OperatorParams,
    SiteFunction,
    solve_recursion,
)

logger = get_logger(__name__)
settings = get_settings()

EIGEN_CHUNK = 512
SPLICE_FLOOR = 1e-6
SCAN_POINTS = 64
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SPECTRUM_TOLERANCE = 1e-8


@dataclass
class TridiagonalOperator:
    """H restricted to [−N, N] with Dirichlet boundary."""

    lam: float
    freq: Frequency
    theta: PhaseSpec
    N: int
    diagonal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise PreconditionViolated(f"N must be >= 1, got {self.N}")
        self.diagonal = 2.0 * self.lam * np.cos(2.0 * np.pi * orbit_phases(self.freq, self.theta, self.sites))

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def off_diagonal(self) -> np.ndarray:
        return np.ones(self.size - 1)

    @property
    def norm_bound(self) -> float:
        return 2.0 + 2.0 * abs(self.lam)

    def params(self, energy: float) -> OperatorParams:
        return OperatorParams(self.lam, self.freq, self.theta, energy)

    def apply(self, vector: np.ndarray) -> np.ndarray:
        out = self.diagonal * vector
        out[:-1] += vector[1:]
        out[1:] += vector[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


@dataclass
class EigenPair:
    """One eigenpair of a truncation; ``vector`` has unit ℓ² norm."""

    energy: float
    vector: np.ndarray = field(repr=False)
    residual: float
    boundary_mass: float

    @property
    def center(self) -> int:
        """Site of the largest amplitude, on the [−N, N] labeling."""
        N = (len(self.vector) - 1) // 2
        return int(np.argmax(np.abs(self.vector))) - N

    def to_json(self) -> Dict[str, Any]:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "boundary_mass": self.boundary_mass,
            "center": self.center,
        }


def _boundary_mass(vector: np.ndarray) -> float:
    width = max(1, len(vector) // 20)
    return float(np.sum(vector[:width] ** 2) + np.sum(vector[-width:] ** 2))


def eigenpairs(op: TridiagonalOperator, window: Optional[Tuple[float, float]] = None) -> List[EigenPair]:
    """All eigenpairs of the truncation, or those with energy in ``window``.

    Large truncations are solved in index chunks so the dense eigenvector
    block stays bounded.
    """
    d, e = op.diagonal, op.off_diagonal
    if window is not None:
        lo, hi = window
        if hi <= lo:
            return []
        values, vectors = eigh_tridiagonal(d, e, select="v", select_range=(lo, hi))
        blocks = [(values, vectors)]
    elif op.size <= EIGEN_CHUNK:
        blocks = [eigh_tridiagonal(d, e)]
    else:
        blocks = []
        for first in range(0, op.size, EIGEN_CHUNK):
            last = min(first + EIGEN_CHUNK, op.size) - 1
            blocks.append(eigh_tridiagonal(d, e, select="i", select_range=(first, last)))

    pairs = []
    for values, vectors in blocks:
        for i, energy in enumerate(values):
            vec = vectors[:, i]
            residual = float(np.linalg.norm(op.apply(vec) - energy * vec))
            pairs.append(EigenPair(float(energy), vec, residual, _boundary_mass(vec)))
    worst = max((p.residual for p in pairs), default=0.0)
    if worst > 1e-10 * op.norm_bound:
        logger.warning(f"Eigen-residual {worst:.2e} above tolerance (N={op.N}, lambda={op.lam})")
    return pairs


def filtered_pairs(pairs: Sequence[EigenPair], tolerance: Optional[float] = None) -> List[EigenPair]:
    """Pairs whose boundary mass is below the tolerance."""
    tolerance = settings.boundary_mass_tolerance if tolerance is None else tolerance
    return [p for p in pairs if p.boundary_mass < tolerance]


def _inward(diag_minus_e: np.ndarray, from_right: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Dirichlet solution of the recursion started at one end, as (values, log shifts).

    ``diag_minus_e`` holds E − v over the sites; the outermost site gets
    amplitude 1 with a zero beyond it.
    """
    n = len(diag_minus_e)
    values = np.zeros(n)
    shifts = np.zeros(n)
    order = range(n - 1, -1, -1) if from_right else range(n)
    outer, cur, shift = 0.0, 1.0, 0.0
    prev_index = None
    for i in order:
        if prev_index is not None:
            # φ(i) = (E − v(prev))φ(prev) − φ(beyond prev)
            cur, outer = diag_minus_e[prev_index] * cur - outer, cur
            if abs(cur) > 1e150:
                cur, outer, shift = cur * RESCALE, outer * RESCALE, shift + RESCALE_BITS * LN2
        values[i], shifts[i] = cur, shift
        prev_index = i
    return values, shifts


def refine_tails(op: TridiagonalOperator, pair: EigenPair, floor: float = SPLICE_FLOOR) -> SiteFunction:
    """Eigenvector with tails recomputed by inward recursion from the boundary.

    The solver vector is kept where |v| ≥ floor·max|v|; outside that core
    each tail is the Dirichlet solution from the nearer boundary, scaled to
    agree with the solver vector at the splice site.
    """
    vec = pair.vector
    peak = float(np.max(np.abs(vec)))
    core = np.nonzero(np.abs(vec) >= floor * peak)[0]
    first, last = int(core[0]), int(core[-1])
    func = SiteFunction.from_values(-op.N, vec)
    c = pair.energy - op.diagonal

    if last < op.size - 1:
        values, shifts = _inward(c[last:], from_right=True)
        tail = SiteFunction.from_values(0, values)
        tail.logs = tail.logs + shifts
        scale = math.log(abs(vec[last])) - tail.logs[0]
        sign = int(np.sign(vec[last])) * int(tail.signs[0])
        func.signs[last:] = tail.signs * sign
        func.logs[last:] = tail.logs + scale
    if first > 0:
        values, shifts = _inward(c[: first + 1], from_right=False)
        tail = SiteFunction.from_values(0, values)
        tail.logs = tail.logs + shifts
        scale = math.log(abs(vec[first])) - tail.logs[-1]
        sign = int(np.sign(vec[first])) * int(tail.signs[-1])
        func.signs[: first + 1] = tail.signs * sign
        func.logs[: first + 1] = tail.logs + scale
    func.meta = {"energy": pair.energy, "splice": [first - op.N, last - op.N], "floor": floor}
    return func


# Generalized eigenfunctions


def _signed_combine(
    sa: np.ndarray, la: np.ndarray, coef: float, sb: np.ndarray, lb: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Sign/log arrays of a + coef·b for sign/log arrays a and b."""
    if coef == 0.0:
        return sa.copy(), la.copy()
    sb = sb * (1 if coef > 0 else -1)
    lb = lb + math.log(abs(coef))
    la = np.where(sa != 0, la, -np.inf)
    lb = np.where(sb != 0, lb, -np.inf)
    hi = np.maximum(la, lb)
    lo = np.minimum(la, lb)
    hi_sign = np.where(la >= lb, sa, sb)
    same = sa * sb >= 0
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        gap = np.where(np.isfinite(hi), lo - hi, -np.inf)
        mag = np.where(same, np.log1p(np.exp(gap)), np.log(-np.expm1(gap)))
    logs = hi + mag
    signs = np.where(np.isfinite(logs), hi_sign, 0).astype(np.int8)
    return signs, np.where(np.isfinite(logs), logs, 0.0)


@dataclass
class _Family:
    """φ_t with φ_t(0) = 1 and φ_t(−1) = t on [−M, M].

    φ_t = u_R + (t − t_R)w on k ≥ 0 and u_L + (t − t_L)w on k < 0, with u_R,
    u_L the solutions decaying to the right and left and w(0) = 0, w(−1) = 1.
    """

    M: int
    t_right: float
    t_left: float
    right: SiteFunction
    left: SiteFunction
    w: SiteFunction

    def evaluate(self, t: float) -> SiteFunction:
        M = self.M
        ws, wl = self.w.signs, self.w.logs
        rs, rl = _signed_combine(
            self.right.signs[M:], self.right.logs[M:], t - self.t_right, ws[M:], wl[M:]
        )
        ls, ll = _signed_combine(
            self.left.signs[:M], self.left.logs[:M], t - self.t_left, ws[:M], wl[:M]
        )
        return SiteFunction(-M, np.concatenate([ls, rs]), np.concatenate([ll, rl]))

    def sup(self, phi: SiteFunction) -> float:
        """ln max_k |φ(k)|/(1+|k|)."""
        weights = np.log1p(np.abs(phi.sites))
        return float(np.max(phi.log_abs_array() - weights))

    def spread(self, phi: SiteFunction) -> float:
        """ln Σ φ(k)²/(1+|k|)², the tie-break."""
        weighted = 2.0 * (phi.log_abs_array() - np.log1p(np.abs(phi.sites)))
        return float(np.logaddexp.reduce(weighted[np.isfinite(weighted)]))

    def key(self, t: float) -> Tuple[float, float]:
        phi = self.evaluate(t)
        return round(self.sup(phi), 12), self.spread(phi)


def _directional(params: OperatorParams, M: int, pad: int, from_right: bool) -> SiteFunction:
    """Solution decaying toward one side, normalized at 0, on [−M, M]."""
    best = None
    for extra in range(3):
        B = M + pad + extra
        sites = np.arange(-M - 1, B + 1) if from_right else np.arange(-B, M + 1)
        c = params.energy - params.site_potential(sites)
        values, shifts = _inward(c, from_right=from_right)
        func = SiteFunction.from_values(int(sites[0]), values)
        func.logs = func.logs + shifts
        at_zero = func.log_abs(0)
        quality = at_zero - float(np.max(func.restrict(-M, M).log_abs_array()))
        if best is None or quality > best[0]:
            best = (quality, func)
    func = best[1]
    if func.value(0).is_zero():
        raise NoTemperateDirection("directional solution vanishes at the origin")
    return func.normalized_at(0)


def generalized_eigenfunction(
    params: OperatorParams,
    M: int,
    sup_cap: Optional[float] = None,
    pad: Optional[int] = None,
    spectrum: Optional[Sequence[float]] = None,
    tolerance: float = SPECTRUM_TOLERANCE,
) -> SiteFunction:
    """Solution with φ(0) = 1 on [−M, M] minimizing max_k |φ(k)|/(1+|k|).

    The free parameter t = φ(−1) is scanned between the right- and
    left-decaying directions and refined by golden-section search; ties in
    the sup are broken by the weighted ℓ² spread.

    With ``spectrum`` given, the energy must lie within ``tolerance`` of one
    of its values.
    """
    if M < 1:
        raise PreconditionViolated("M must be >= 1")
    if spectrum is not None:
        values = np.asarray(spectrum, dtype=np.float64)
        gap = float(np.min(np.abs(values - params.energy))) if values.size else math.inf
        if not gap <= tolerance:
            raise PreconditionViolated(
                f"E = {params.energy} is {gap:.3g} from the sampled spectrum (tolerance {tolerance:g})",
                {"energy": params.energy, "gap": gap},
            )
    if M > settings.generalized_range_budget:
        raise BudgetExceeded(f"M = {M} exceeds the budget {settings.generalized_range_budget}")
    sup_cap = settings.generalized_sup_cap if sup_cap is None else sup_cap
    pad = pad if pad is not None else max(20, M // 2)

    right = _directional(params, M, pad, from_right=True)
    left = _directional(params, M, pad, from_right=False)
    t_right = right.value(-1).to_real()
    t_left = left.value(-1).to_real()
    w = solve_recursion(params, 0.0, 1.0, -M, M)
    family = _Family(M, t_right, t_left, right.restrict(-M, M), left.restrict(-M, M), w)

    # directional bracket plus a coarse sweep of all directions t = tan ψ
    lo, hi = sorted((t_left, t_right))
    width = hi - lo
    margin = 0.1 * width if width > 0 else 1e-12 * max(1.0, abs(lo))
    angles = np.tan(np.linspace(-np.pi / 2, np.pi / 2, SCAN_POINTS + 2)[1:-1])
    grid = np.unique(np.concatenate([np.linspace(lo - margin, hi + margin, SCAN_POINTS + 1), angles]))
    keys = [family.key(float(t)) for t in grid]
    best = min(range(len(grid)), key=lambda i: keys[i])
    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, len(grid) - 1)])

    # golden-section refinement on the (sup, spread) key
    x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    k1, k2 = family.key(x1), family.key(x2)
    for _ in range(80):
        if b - a <= 1e-16 * max(1.0, abs(a)):
            break
        if k1 <= k2:
            b, x2, k2 = x2, x1, k1
            x1 = b - GOLDEN * (b - a)
            k1 = family.key(x1)
        else:
            a, x1, k1 = x1, x2, k2
            x2 = a + GOLDEN * (b - a)
            k2 = family.key(x2)
    candidates = [(keys[best], float(grid[best])), (k1, x1), (k2, x2)]
    t_star = min(candidates)[1]

    phi = family.evaluate(t_star)
    sup = family.sup(phi)
    temperate = sup <= 1e-9
    phi.meta = {
        "energy": params.energy,
        "phi_minus_one": t_star,
        "t_right": t_right,
        "t_left": t_left,
        "log_sup_weighted": sup,
        "temperate": temperate,
        "method": "directional scan + golden-section",
    }
    if sup > math.log(sup_cap):
        raise NoTemperateDirection(
            f"minimized sup |phi(k)|/(1+|k|) = e^{sup:.3g} exceeds the cap {sup_cap}",
            {"energy": params.energy, "log_sup": sup},
        )
    return phi


# Decay rates


@dataclass
class DecayRate:
    """Fitted exponential rate of (φ²(k)+φ²(k−1))^{1/2} against |k|."""

    rate: float
    rate_right: float
    rate_left: float
    theorem_bound: Optional[float]
    satisfied: Optional[bool]
    out_of_regime: bool
    fit_window: Tuple[int, int]
    clamped: bool = False

    def to_json(self) -> Dict[str, Any]:
        return {
            "rate": self.rate,
            "rate_right": self.rate_right,
            "rate_left": self.rate_left,
            "theorem_bound": self.theorem_bound,
            "satisfied": self.satisfied,
            "out_of_regime": self.out_of_regime,
            "fit_window": list(self.fit_window),
            "clamped": self.clamped,
        }


def _side_slope(phi: SiteFunction, ks: np.ndarray) -> float:
    a = np.array([phi.log_abs(int(k)) for k in ks])
    b = np.array([phi.log_abs(int(k) - 1) for k in ks])
    y = 0.5 * np.logaddexp(2 * a, 2 * b)
    keep = np.isfinite(y)
    if np.count_nonzero(keep) < 3:
        raise WindowTooSmall("fewer than 3 usable sites in the fit window")
    slope, _ = np.polyfit(np.abs(ks[keep]).astype(np.float64), y[keep], 1)
    return float(slope)


def decay_rate(
    phi: SiteFunction,
    fit_window: Optional[Tuple[int, int]] = None,
    lam: Optional[float] = None,
    beta: float = 0.0,
    slack: float = 0.1,
    regime_margin: float = 0.05,
) -> DecayRate:
    """Least-squares decay rate of ½ln(φ²(k)+φ²(k−1)) in |k|, fitted per side.

    The reported rate is the smaller of the two side slopes. The default fit
    window drops the innermost and outermost tenth of the sites.
    """
    reach = min(-phi.start - 1, phi.stop)
    if fit_window is None:
        fit_window = (int(math.ceil(0.1 * reach)), int(math.floor(0.9 * reach)))
    k_lo, k_hi = fit_window
    k_lo = max(k_lo, 1)
    if k_hi - k_lo + 1 < 3 or k_hi > reach:
        raise WindowTooSmall(f"fit window {fit_window} is too small for range [{phi.start}, {phi.stop}]")

    ks = np.arange(k_lo, k_hi + 1)
    right = _side_slope(phi, ks)
    left = _side_slope(phi, -ks)
    rate = min(right, left)
    clamped = abs(rate) > settings.rate_cap
    if clamped:
        rate = math.copysign(settings.rate_cap, rate)
        logger.warning(f"Decay rate clamped to {rate}")

    bound, satisfied, out_of_regime = None, None, False
    if lam is not None and lam != 0:
        L = math.log(abs(lam))
        bound = -(L - 2.0 * beta)
        out_of_regime = L <= 2.0 * beta + regime_margin
        satisfied = None if out_of_regime else rate <= bound + slack
    return DecayRate(rate, right, left, bound, satisfied, out_of_regime, (k_lo, k_hi), clamped)


# Spectra


@dataclass
class SpectrumSample:
    """Union of truncation spectra over a θ grid."""

    energies: List[float]
    hausdorff: Optional[float]
    thetas: List[float]
    N: int

    def to_json(self) -> Dict[str, Any]:
        return {"energies": self.energies, "hausdorff": self.hausdorff, "thetas": self.thetas, "N": self.N}


def dedup(values: Sequence[float], resolution: float) -> List[float]:
    """Sorted values with neighbors closer than ``resolution`` merged."""
    out: List[float] = []
    for v in sorted(values):
        if not out or v - out[-1] >= resolution:
            out.append(float(v))
    return out


def hausdorff(a: Sequence[float], b: Sequence[float]) -> float:
    """Hausdorff distance between two finite subsets of R."""
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))

    def directed(x: np.ndarray, y: np.ndarray) -> float:
        idx = np.clip(np.searchsorted(y, x), 1, len(y) - 1) if len(y) > 1 else np.zeros(len(x), int)
        left = np.abs(x - y[np.maximum(idx - 1, 0)])
        right = np.abs(x - y[idx])
        return float(np.max(np.minimum(left, right)))

    return max(directed(a, b), directed(b, a))


def _truncation_spectrum(lam: float, freq: Frequency, theta: float, N: int) -> np.ndarray:
    op = TridiagonalOperator(lam, freq, PhaseSpec.from_real(theta), N)
    return eigh_tridiagonal(op.diagonal, op.off_diagonal, eigvals_only=True)


def spectrum_sample(
    lam: float,
    freq: Frequency,
    thetas: Sequence[float],
    N: int,
    resolution: Optional[float] = None,
    workers: Optional[int] = None,
) -> SpectrumSample:
    """Deduplicated union of the truncation spectra over ``thetas``.

    The Hausdorff distance between the spectra of the even- and odd-indexed
    halves of the grid is reported when the grid has at least two phases.
    """
    if not thetas:
        raise PreconditionViolated("theta grid must be non-empty")
    resolution = settings.dedup_resolution if resolution is None else resolution
    workers = workers or settings.workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        spectra = list(pool.map(lambda t: _truncation_spectrum(lam, freq, t, N), thetas))

    energies = dedup(np.concatenate(spectra).tolist(), resolution)
    distance = None
    if len(spectra) >= 2:
        even = np.concatenate(spectra[0::2])
        odd = np.concatenate(spectra[1::2])
        distance = hausdorff(even, odd)
    logger.info(f"Spectrum sample: {len(energies)} energies over {len(thetas)} phases (N={N})")
    return SpectrumSample(energies, distance, [float(t) for t in thetas], N)


# Localization pipeline


def _shifted_real(freq: Frequency, theta: PhaseSpec, c: int) -> PhaseSpec:
    """Real θ + cα mod 1, to the working precision of α."""
    alpha = Fraction(freq.fixed_alpha(settings.fixed_point_bits), 2**settings.fixed_point_bits)
    return PhaseSpec(real=(theta.real + c * alpha) % 1, digits=theta.digits)


@dataclass
class LocalizedState:
    """A boundary-filtered eigenpair re-centered at its localization center."""

    params: OperatorParams
    pair: EigenPair
    center: int
    phi: SiteFunction


def localized_states(op: TridiagonalOperator, count: int, tolerance: Optional[float] = None) -> List[LocalizedState]:
    """The ``count`` boundary-filtered eigenpairs with energies closest to the middle of the filtered spectrum.

    Each state is re-centered so its center becomes site 0 (θ → θ + cα) and
    normalized to φ(0) = 1.
    """
    pairs = filtered_pairs(eigenpairs(op), tolerance)
    middle = float(np.median([p.energy for p in pairs])) if pairs else 0.0
    picked = sorted(pairs, key=lambda p: (abs(p.energy - middle), p.energy))[:count]
    states = []
    for pair in sorted(picked, key=lambda p: p.energy):
        c = pair.center
        theta = op.theta.shifted(c) if op.theta.is_exact else _shifted_real(op.freq, op.theta, c)
        phi = refine_tails(op, pair).recentered(c).normalized_at(0)
        params = OperatorParams(op.lam, op.freq, theta, pair.energy)
        states.append(LocalizedState(params, pair, c, phi))
    if len(states) < count:
        logger.warning(f"Only {len(states)} of {count} requested eigenpairs pass the boundary filter")
    return states
