"""Finite-scale audits of the determinant, Green's-function and resonance bounds.

Each audit expands into independent units; units run on a thread pool and
their records come back in unit order. A unit that raises a LabError
produces a record carrying the error instead of stopping the stream.
"""

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from app.arith.cf_arith import Frequency, orbit_phases
from app.core.errors import DegenerateDenominator, LabError, PreconditionViolated
from app.core.logging import format_params, get_logger
from app.operator.cocycle import (
    OperatorParams,
    lyapunov_sup_audit,
    propagation_audit,
    shift_cap,
    shift_difference,
    shift_residual,
    step_matrix,
    telescoping_bound,
    window_growth,
)
from app.operator.greens import (
    block_expansion_bound,
    block_identity_residual,
    klem1_entry_audit,
    klem2_audit,
    numerator_bound_audit,
    transfer_identity_residual,
)
from app.operator.spectral import LocalizedState, TridiagonalOperator
from app.resonance.amplitudes import half_j_range, offdiag_decay_sweep, resonance_amplitudes
from app.resonance.contraction import full_site_contraction, half_site_contraction
from app.resonance.lagrange import uniform_witness
from app.resonance.schemes import build_scheme, sine_minima_audit
from app.schemas.reports import AuditRecord
from app.schemas.run_config import RunConfig
from app.services.localization_service import LocalizationService

logger = get_logger(__name__)

AUDIT_ENERGIES = 3
IDENTITY_TOLERANCE = 1e-8
MAX_GROWTH_LOG = 700.0
# Samples of these audits carrying these flags are dropped from the stream
DISCARD_FLAGGED = frozenset({"klem2", "thm1", "thm2"})
DISCARD_FLAGS = frozenset({"cancellation", "near_singular_box"})

Unit = Tuple[str, Dict[str, Any], Callable[[], Any]]


class AuditService:
    """Builds and runs the named audits for one configuration."""

    def __init__(self, config: RunConfig, freq: Optional[Frequency] = None):
        self.config = config
        self.freq = freq or config.build_frequency()
        self.theta = config.build_theta()
        self.config_hash = config.config_hash()
        self.localization = LocalizationService(config, self.freq)
        self.discarded: Counter = Counter()

    @property
    def names(self) -> List[str]:
        return sorted(AUDITS)

    # Inputs shared by the audits

    @cached_property
    def energies(self) -> List[float]:
        """Evenly spaced interior eigenvalues of the spectrum-sized truncation."""
        op = TridiagonalOperator(self.config.lam, self.freq, self.theta, self.config.spectrum_N)
        spectrum = eigh_tridiagonal(op.diagonal, op.off_diagonal, eigvals_only=True)
        picks = np.linspace(0, len(spectrum) - 1, AUDIT_ENERGIES + 2)[1:-1].round().astype(int)
        return [float(spectrum[i]) for i in picks]

    @cached_property
    def states(self) -> List[LocalizedState]:
        return self.localization.states()

    def params(self, energy: float) -> OperatorParams:
        return OperatorParams(self.config.lam, self.freq, self.theta, energy)

    def _base(self, **extra: Any) -> Dict[str, Any]:
        return {"lambda": self.config.lam, "theta": self.theta.to_json(), **extra}

    # Record assembly

    def _record(self, lemma: str, params: Dict[str, Any], result: Any) -> AuditRecord:
        data = result.to_json() if hasattr(result, "to_json") else dict(result)
        measured = data.pop("measured_log", None)
        bound = data.pop("bound_log", None)
        passed = data.pop("pass", None)
        flags = data.pop("flags", [])
        error = data.pop("error", None)
        return AuditRecord(
            config_hash=self.config_hash,
            lemma=lemma,
            params=params,
            measured_log=measured,
            bound_log=bound,
            passed=passed,
            flags=flags,
            detail=data,
            error=error,
        )

    def _run_unit(self, unit: Unit) -> List[AuditRecord]:
        lemma, params, fn = unit
        try:
            result = fn()
        except LabError as e:
            logger.warning(f"Audit {lemma} failed for {format_params(params)}: {e.message}")
            return [AuditRecord(config_hash=self.config_hash, lemma=lemma, params=params, error=e.to_dict())]
        results = result if isinstance(result, list) else [result]
        return [self._record(lemma, params, r) for r in results]

    def run(self, which: str) -> Iterator[AuditRecord]:
        """Records in unit order; flagged samples of the discarding audits are counted in ``discarded``."""
        if which not in AUDITS:
            raise PreconditionViolated(f"unknown audit {which!r}; choose from {', '.join(self.names)}")
        units = AUDITS[which](self)
        logger.info(f"Audit {which}: {len(units)} units on {self.config.pool_size} workers")
        with ThreadPoolExecutor(max_workers=self.config.pool_size) as pool:
            for records in pool.map(self._run_unit, units):
                for record in records:
                    if record.lemma in DISCARD_FLAGGED and DISCARD_FLAGS.intersection(record.flags):
                        self.discarded[record.lemma] += 1
                        continue
                    yield record

    # Cocycle and determinant audits

    def klem1_units(self) -> List[Unit]:
        eps = self.config.epsilon
        units = []
        for n in self.config.scales:
            q_n = self.freq.q(n)
            cap = shift_cap(self.freq, n)
            for energy in self.energies:
                params = self.params(energy)
                for k in (q_n, 2 * q_n):
                    for j in sorted({1, max(1, cap // 2)}):
                        base = self._base(energy=energy, n=n, k=k, j=j, epsilon=eps)
                        units.append(
                            ("klem1", base, lambda p=params, k=k, j=j, n=n, c=cap: shift_difference(p, k, j, n, eps, c))
                        )
                        units.append(
                            ("klem1_entry", base, lambda p=params, k=k, j=j, n=n: klem1_entry_audit(p, k, j, n, eps))
                        )
        return units

    def klem2_units(self) -> List[Unit]:
        """Units on the localized states at their re-centered phases, where φ(0) = 1."""
        eps, C = self.config.epsilon, self.config.C
        units = []
        for n in self.config.scales:
            q_n = self.freq.q(n)
            for index, state in enumerate(self.states):
                for x in sorted({0, q_n // 8, q_n // 4}):
                    base = {
                        "lambda": self.config.lam,
                        "theta": state.params.theta.to_json(),
                        "state": index,
                        "energy": state.pair.energy,
                        "n": n,
                        "x": x,
                        "p1": q_n // 2,
                        "p2": q_n,
                        "epsilon": eps,
                        "C": C,
                    }
                    units.append(
                        ("klem2", base, lambda p=state.params, x=x, n=n, q=q_n: klem2_audit(p, x, q // 2, q, n, eps, C))
                    )
        return units

    def numerator_units(self) -> List[Unit]:
        eps = self.config.epsilon
        units = []
        for n in self.config.scales:
            q_n = self.freq.q(n)
            for energy in self.energies:
                params = self.params(energy)
                for length in (q_n // 2, q_n, 2 * q_n):
                    interval = (0, length - 1)
                    base = self._base(energy=energy, n=n, interval=list(interval), epsilon=eps)
                    units.append(
                        ("numerator", base, lambda p=params, iv=interval: numerator_bound_audit(p, iv, eps))
                    )
        return units

    def telescoping_units(self) -> List[Unit]:
        units = []
        for n in self.config.scales:
            for energy in self.energies:
                base = self._base(energy=energy, n=n, j=1, epsilon=self.config.epsilon)
                units.append(("telescoping", base, lambda e=energy, n=n: self._telescoping(e, n)))
        return units

    def _telescoping(self, energy: float, n: int) -> Dict[str, Any]:
        """Products along one period perturbed by the shift θ → θ + (q_nα − p_n)."""
        params = self.params(energy)
        q_n = self.freq.q(n)
        phases = orbit_phases(self.freq, self.theta, np.arange(q_n))
        delta = float(shift_residual(self.freq, n))
        A_seq = [step_matrix(params, float(ph)) for ph in phases]
        B_seq = [step_matrix(params, float(ph) + delta) - a for ph, a in zip(phases, A_seq)]
        d = params.L + self.config.epsilon
        growth = max(0.0, window_growth(A_seq, d))
        if growth > MAX_GROWTH_LOG:
            raise PreconditionViolated(f"window growth e^{growth:.1f} is out of binary64 range")
        D = math.exp(growth) * (1 + 1e-9)
        audit = telescoping_bound(A_seq, B_seq, D, d)
        return {
            "measured_log": audit.lhs.to_json()["log"],
            "bound_log": audit.rhs.to_json()["log"],
            "pass": audit.passed,
            "D": D,
            "d": d,
        }

    def identities_units(self) -> List[Unit]:
        units = []
        for n in self.config.scales:
            q_n = self.freq.q(n)
            for energy in self.energies:
                base = self._base(energy=energy, n=n, k=q_n)
                units.append(("transfer_identity", base, lambda e=energy, k=q_n: self._transfer_identity(e, k)))
        for index in range(len(self.states)):
            for n in self.config.scales:
                base = self._base(state=index, n=n)
                units.append(("block_identity", base, lambda i=index, n=n: self._block_identity(i, n)))
        return units

    def _transfer_identity(self, energy: float, k: int) -> Dict[str, Any]:
        residual = transfer_identity_residual(self.params(energy), k)
        return {"residual": residual, "pass": residual <= IDENTITY_TOLERANCE}

    def _block_identity(self, index: int, n: int) -> List[Dict[str, Any]]:
        state = self.states[index]
        half = min(self.freq.q(n) // 2, 8)
        interval = (-half, half)
        residual = block_identity_residual(state.params, state.phi, interval, 0)
        scale = state.phi.log_abs(0)
        relative = 0.0 if residual.is_zero() else math.exp(residual.log_abs - scale)
        expansion = block_expansion_bound(state.params, state.phi, interval, 0)
        return [
            {"interval": list(interval), "relative_residual": relative, "pass": relative <= IDENTITY_TOLERANCE},
            {"kind": "expansion", **expansion},
        ]

    def lyapunov_sup_units(self) -> List[Unit]:
        ks = [self.freq.q(n) for n in self.config.scales]
        units = []
        for energy in self.energies:
            base = self._base(energy=energy, ks=ks, epsilon=self.config.epsilon)
            units.append(("lyapunov_sup", base, lambda e=energy: self._lyapunov_sup(e, ks)))
        return units

    def _lyapunov_sup(self, energy: float, ks: List[int]) -> Dict[str, Any]:
        result = lyapunov_sup_audit(self.params(energy), ks, self.config.phase_samples, self.config.epsilon)
        return {**result, "pass": result["empirical_k0"] is not None}

    # Eigenfunction audits

    def propagation_units(self) -> List[Unit]:
        units = []
        for index in range(len(self.states)):
            for n in self.config.scales:
                base = self._base(state=index, n=n, epsilon=self.config.epsilon)
                units.append(("propagation", base, lambda i=index, n=n: self._propagation(i, n)))
        return units

    def _propagation(self, index: int, n: int) -> List[Dict[str, Any]]:
        state = self.states[index]
        q_n = self.freq.q(n)
        out = []
        for k1, k2 in ((q_n, 0), (-q_n, 0), (0, q_n)):
            if not state.phi.covers(min(k1, k2), max(k1, k2) + 1):
                continue
            out.append(propagation_audit(state.params, state.phi, k1, k2, self.config.epsilon))
        if not out:
            raise PreconditionViolated(f"q_{n} = {q_n} exceeds the eigenfunction range")
        return out

    def _profile(self, index: int, n: int):
        phi = self.states[index].phi
        j_max = self.localization.profile_reach(phi, n)
        if j_max < 1:
            raise PreconditionViolated(f"scale n={n} does not fit N={self.config.N}")
        return resonance_amplitudes(phi, self.freq, n, self.config.profile_epsilon, half_j_range(j_max))

    def le_resonant_units(self) -> List[Unit]:
        units = []
        for index in range(len(self.states)):
            for n in self.config.scales:
                base = self._base(state=index, n=n, epsilon=self.config.profile_epsilon)
                units.append(("le_resonant", base, lambda i=index, n=n: self._le_resonant(i, n)))
        return units

    def _le_resonant(self, index: int, n: int) -> Dict[str, Any]:
        state = self.states[index]
        profile = self._profile(index, n)
        reach = int(max(abs(t) for t in profile.amplitudes)) * profile.q_n
        sweep = offdiag_decay_sweep(state.phi, profile, state.params.L, range(-reach, reach + 1))
        return {**sweep.to_json(), "pass": not sweep.failures}

    def _contraction_units(self, lemma: str) -> List[Unit]:
        units = []
        for index in range(len(self.states)):
            for n in self.config.scales:
                base = self._base(state=index, n=n, C=self.config.C, epsilon=self.config.profile_epsilon)
                units.append((lemma, base, lambda i=index, n=n: self._contraction(lemma, i, n)))
        return units

    def _contraction(self, lemma: str, index: int, n: int) -> List[Dict[str, Any]]:
        state = self.states[index]
        profile = self._profile(index, n)
        j_max = int(max(abs(t) for t in profile.amplitudes))
        L, C, eps = state.params.L, self.config.C, self.config.profile_epsilon
        if lemma == "thm1":
            results = []
            for j in range(-j_max, j_max):
                try:
                    results.append(half_site_contraction(profile, j, L, C, eps).to_json())
                except DegenerateDenominator as e:
                    if e.context.get("vanishing"):
                        results.append({"j": str(j), "n": profile.n, "pass": True, "flags": ["vanishing_profile"]})
                    else:
                        results.append({"j": str(j), "n": profile.n, "pass": None, "error": e.to_dict()})
            return results
        return [
            full_site_contraction(profile, j, L, C, eps).to_json()
            for j in range(-j_max + 1, j_max)
            if j != 0
        ]

    def thm1_units(self) -> List[Unit]:
        return self._contraction_units("thm1")

    def thm2_units(self) -> List[Unit]:
        return self._contraction_units("thm2")

    # Resonance-structure audits

    def claims_units(self) -> List[Unit]:
        eps, C = self.config.epsilon, self.config.C
        units = []
        for n in self.config.scales:
            for j in self.config.j_values:
                for kind in ("half", "full"):
                    if kind == "full" and j == 0:
                        continue
                    base = self._base(n=n, j=j, kind=kind, C=C, epsilon=eps)
                    units.append(("claims", base, lambda n=n, j=j, kind=kind: self._claims(n, j, kind)))
        return units

    def _claims(self, n: int, j: int, kind: str) -> Dict[str, Any]:
        eps = self.config.epsilon
        scheme = build_scheme(self.freq, n, j, kind, eps, allow_clamp=True)
        audit = sine_minima_audit(scheme, self.freq, self.theta, self.config.C, eps)
        flags = ["clamped"] if scheme.clamped else []
        return {**audit.to_json(), "pass": audit.claim_pass, "flags": flags}

    def le_uniform_units(self) -> List[Unit]:
        units = []
        for n in self.config.scales:
            for energy in self.energies:
                base = self._base(energy=energy, n=n)
                units.append(("le_uniform", base, lambda e=energy, n=n: self._le_uniform(e, n)))
        return units

    def _le_uniform(self, energy: float, n: int) -> Dict[str, Any]:
        """Nodes θ + mα for 0 ≤ m < q_n."""
        phases = orbit_phases(self.freq, self.theta, np.arange(self.freq.q(n)))
        witness = uniform_witness(self.params(energy), phases.tolist())
        return {"measured_log": witness.lhs, "bound_log": witness.rhs, "pass": witness.passed, "m": witness.m, "k": witness.k}


AUDITS: Dict[str, Callable[[AuditService], List[Unit]]] = {
    "klem1": AuditService.klem1_units,
    "klem2": AuditService.klem2_units,
    "numerator": AuditService.numerator_units,
    "le_resonant": AuditService.le_resonant_units,
    "claims": AuditService.claims_units,
    "thm1": AuditService.thm1_units,
    "thm2": AuditService.thm2_units,
    "le_uniform": AuditService.le_uniform_units,
    "telescoping": AuditService.telescoping_units,
    "propagation": AuditService.propagation_units,
    "identities": AuditService.identities_units,
    "lyapunov_sup": AuditService.lyapunov_sup_units,
}
