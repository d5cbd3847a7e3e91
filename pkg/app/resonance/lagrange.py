"""Lagrange interpolation terms over cosine nodes and the uniformity witness."""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from app.core.config import get_settings
from app.core.errors import DegenerateNodes, PreconditionViolated
from app.core.logging import get_logger
from app.operator.cocycle import OperatorParams
from app.operator.greens import box_det

logger = get_logger(__name__)
settings = get_settings()

GRID_CHUNK = 4096


@dataclass
class LagrangeTerms:
    """Lag_m for every node, with the maximizing x and the method used."""

    values: np.ndarray
    argmax: np.ndarray
    nodes: np.ndarray
    method: str

    def __len__(self) -> int:
        return len(self.values)

    def to_json(self) -> Dict[str, Any]:
        return {"values": self.values.tolist(), "argmax": self.argmax.tolist(), "method": self.method}


def cosine_nodes(theta_list: Sequence[float]) -> np.ndarray:
    """c_j = cos2πθ_j, rejecting coincident nodes."""
    nodes = np.cos(2.0 * np.pi * np.mod(np.asarray(theta_list, dtype=np.float64), 1.0))
    if len(nodes) > 1:
        ordered = np.sort(nodes)
        gaps = np.diff(ordered)
        if np.any(gaps == 0.0):
            i = int(np.argmin(gaps))
            raise DegenerateNodes(
                f"cos 2 pi theta coincide at {ordered[i]!r}", {"node": float(ordered[i])}
            )
    return nodes


def log_node_product(nodes: np.ndarray, m: int, x: float) -> float:
    """ln ∏_{j≠m} |x − c_j|/|c_m − c_j|."""
    others = np.delete(nodes, m)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.abs(x - others))) - np.sum(np.log(np.abs(nodes[m] - others))))


def _exact_maximum(nodes: np.ndarray, m: int) -> tuple:
    """max over [−1, 1] of the node product for index m.

    Between consecutive roots, p'/p = Σ 1/(x − c_j) decreases from +∞ to −∞,
    so each interval holds exactly one critical point.
    """
    others = np.sort(np.delete(nodes, m))
    candidates = [-1.0, 1.0]
    for a, b in zip(others[:-1], others[1:]):
        width = b - a
        lo, hi = a + 1e-13 * width, b - 1e-13 * width

        def slope(x: float) -> float:
            return float(np.sum(1.0 / (x - others)))

        if slope(lo) > 0 > slope(hi):
            candidates.append(brentq(slope, lo, hi, xtol=1e-15 * max(1.0, abs(a)), maxiter=200))
        else:
            candidates.append(0.5 * (a + b))
    values = [log_node_product(nodes, m, x) for x in candidates]
    best = int(np.argmax(values))
    return values[best], candidates[best]


def _grid_maximum(nodes: np.ndarray, grid: np.ndarray) -> tuple:
    """Per-node grid maxima followed by bounded local refinement."""
    count = len(nodes)
    best_val = np.full(count, -np.inf)
    best_idx = np.zeros(count, dtype=np.int64)
    for start in range(0, len(grid), GRID_CHUNK):
        xs = grid[start : start + GRID_CHUNK]
        with np.errstate(divide="ignore"):
            logs = np.log(np.abs(xs[:, None] - nodes[None, :]))
        finite = np.isfinite(logs)
        total = np.sum(np.where(finite, logs, 0.0), axis=1)[:, None]
        hits = np.sum(~finite, axis=1)[:, None]
        # ln ∏_{j≠m}|x − c_j|; x landing on a node zeroes every other product
        cand = np.where(hits == 0, total - np.where(finite, logs, 0.0), -np.inf)
        cand = np.where((hits == 1) & ~finite, total, cand)
        idx = np.argmax(cand, axis=0)
        vals = cand[idx, np.arange(count)]
        better = vals > best_val
        best_val[better] = vals[better]
        best_idx[better] = idx[better] + start

    values = np.empty(count)
    argmax = np.empty(count)
    for m in range(count):
        i = int(best_idx[m])
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        a, b = min(lo, hi), max(lo, hi)
        x0 = float(grid[i])
        v0 = log_node_product(nodes, m, x0)
        if b > a:
            res = minimize_scalar(
                lambda x: -log_node_product(nodes, m, x), bounds=(a, b), method="bounded", options={"xatol": 1e-14}
            )
            if -res.fun > v0:
                x0, v0 = float(res.x), float(-res.fun)
        values[m], argmax[m] = v0, x0
    return values, argmax


def lagrange_terms(
    theta_list: Sequence[float],
    exact_max_nodes: Optional[int] = None,
    grid_points: Optional[int] = None,
) -> LagrangeTerms:
    """Lag_m = ln max_{x∈[−1,1]} ∏_{j≠m} |x − cos2πθ_j|/|cos2πθ_m − cos2πθ_j|.

    Up to ``exact_max_nodes`` nodes every critical point is located by
    bracketed root-finding; larger sets use a Chebyshev-spaced grid with
    local refinement.
    """
    exact_max_nodes = settings.lagrange_exact_max_nodes if exact_max_nodes is None else exact_max_nodes
    grid_points = settings.lagrange_grid_points if grid_points is None else grid_points
    nodes = cosine_nodes(theta_list)
    count = len(nodes)
    if count == 0:
        raise PreconditionViolated("theta_list must be non-empty")
    if count == 1:
        return LagrangeTerms(np.zeros(1), np.ones(1), nodes, "empty-product")

    if count <= exact_max_nodes:
        pairs = [_exact_maximum(nodes, m) for m in range(count)]
        values = np.array([p[0] for p in pairs])
        argmax = np.array([p[1] for p in pairs])
        method = "critical-points"
    else:
        grid = np.cos(np.pi * np.linspace(0.0, 1.0, grid_points))[::-1]
        values, argmax = _grid_maximum(nodes, grid)
        method = f"grid-{grid_points}+refine"
    logger.debug(f"Lagrange terms for {count} nodes via {method}")
    return LagrangeTerms(values, argmax, nodes, method)


@dataclass
class UniformWitness:
    """Best m for |P_k(θ_m − ((k−1)/2)α)| ≥ e^{kL − Lag_m}/(k+1)."""

    m: int
    lhs: float
    rhs: float
    passed: bool
    k: int
    per_m: List[Dict[str, float]]

    def to_json(self) -> Dict[str, Any]:
        return {"m": self.m, "lhs_log": self.lhs, "rhs_log": self.rhs, "pass": self.passed, "k": self.k}


def uniform_witness(
    params: OperatorParams, theta_list: Sequence[float], terms: Optional[LagrangeTerms] = None
) -> UniformWitness:
    """Scan every m for the determinant lower bound; report the best margin."""
    if len(theta_list) < 2:
        raise PreconditionViolated("need at least two phases (k >= 1)")
    terms = terms or lagrange_terms(theta_list)
    k = len(theta_list) - 1
    L = params.L
    shift = 0.5 * (k - 1) * params.freq.alpha_float

    rows = []
    for m, theta_m in enumerate(theta_list):
        phase = float(np.mod(theta_m - shift, 1.0))
        lhs = box_det(params, (0, k - 1), phase_override=phase).value.log_abs
        rhs = k * L - float(terms.values[m]) - math.log(k + 1)
        rows.append({"m": m, "lhs_log": lhs, "rhs_log": rhs, "margin": lhs - rhs})
    best = max(rows, key=lambda r: r["margin"])
    passed = best["margin"] >= 0
    if not passed:
        logger.warning(f"No uniformity witness among {k + 1} phases (E={params.energy}, lambda={params.lam})")
    return UniformWitness(best["m"], best["lhs_log"], best["rhs_log"], passed, k, rows)
