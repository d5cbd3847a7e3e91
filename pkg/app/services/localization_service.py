"""Localization pipeline: eigenpairs, decay fits, resonance profiles and certificates."""

import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.arith.cf_arith import Frequency, beta_estimate
from app.core.errors import DegenerateDenominator, LabError, PreconditionViolated
from app.core.logging import get_logger
from app.operator.cocycle import SiteFunction
from app.operator.spectral import LocalizedState, TridiagonalOperator, decay_rate, localized_states
from app.resonance.amplitudes import ResonanceProfile, half_j_range, resonance_amplitudes
from app.resonance.certificate import decay_certificate
from app.resonance.contraction import full_site_contraction, half_site_contraction
from app.schemas.reports import LocalizeReport, StateReport
from app.schemas.run_config import RunConfig

logger = get_logger(__name__)

# acceptance threshold on ln(r_{1/2}/(r_0 + r_1)) in units of L·q_n
HALF_RATIO_FACTOR = 0.3
MAX_PROFILE_J = 10


class LocalizationService:
    """Runs the localization pipeline on one truncation."""

    def __init__(self, config: RunConfig, freq: Optional[Frequency] = None):
        self.config = config
        self.freq = freq or config.build_frequency()
        self.theta = config.build_theta()
        self.eigenfunctions: List[Tuple[int, SiteFunction]] = []

    @property
    def L(self) -> float:
        if self.config.lam == 0:
            raise PreconditionViolated("localization needs lambda != 0")
        return math.log(abs(self.config.lam))

    def beta(self) -> float:
        depth = self.config.beta_depth if self.config.frequency == "beta" else self.config.cf_depth
        return beta_estimate(self.freq, depth)

    def operator(self) -> TridiagonalOperator:
        return TridiagonalOperator(self.config.lam, self.freq, self.theta, self.config.N)

    def states(self) -> List[LocalizedState]:
        logger.info(f"Localizing: lambda={self.config.lam}, N={self.config.N}, {self.theta.describe()}")
        return localized_states(self.operator(), self.config.states)

    def profile_reach(self, phi: SiteFunction, n: int) -> int:
        """Largest integer j whose amplitude windows at scale n fit inside φ's range."""
        q_n = self.freq.q(n)
        reach = min(-phi.start, phi.stop)
        radius = math.floor(10 * self.config.profile_epsilon * q_n)
        return min(MAX_PROFILE_J, (reach - radius) // q_n)

    def profiles(self, phi: SiteFunction) -> List[ResonanceProfile]:
        """Resonance profiles at every configured scale that fits the truncation."""
        out = []
        for n in self.config.scales:
            j_max = self.profile_reach(phi, n)
            if j_max < 1:
                logger.warning(f"Scale n={n} (q_n={self.freq.q(n)}) does not fit N={self.config.N}; skipped")
                continue
            out.append(resonance_amplitudes(phi, self.freq, n, self.config.profile_epsilon, half_j_range(j_max)))
        return out

    def contraction_records(self, profile: ResonanceProfile) -> List[Dict[str, Any]]:
        j_max = int(max(abs(t) for t in profile.amplitudes))
        eps, C = self.config.profile_epsilon, self.config.C
        records = []
        for j in range(-j_max, j_max):
            try:
                result = half_site_contraction(profile, j, self.L, C, eps)
                records.append({"kind": "half", **result.to_json()})
            except DegenerateDenominator as e:
                entry = {"kind": "half", "j": str(j), "n": profile.n}
                if e.context.get("vanishing"):
                    records.append({**entry, "log_ratio": None, "pass": True, "flags": ["vanishing_profile"]})
                else:
                    records.append({**entry, "error": e.to_dict()})
        for j in range(-j_max + 1, j_max):
            if j == 0:
                continue
            records.append({"kind": "full", **full_site_contraction(profile, j, self.L, C, eps).to_json()})
        return records

    def analyze(self, index: int, state: LocalizedState, beta: float, certify: bool) -> StateReport:
        report = StateReport(
            index=index,
            energy=state.pair.energy,
            center=state.center,
            residual=state.pair.residual,
            boundary_mass=state.pair.boundary_mass,
            theta=state.params.theta.to_json(),
        )
        try:
            report.decay = decay_rate(state.phi, lam=self.config.lam, beta=beta).to_json()
            if certify:
                profiles = self.profiles(state.phi)
                report.profiles = [p.to_json() for p in profiles]
                for profile in profiles:
                    report.contraction.extend(self.contraction_records(profile))
                if profiles:
                    cert = decay_certificate(
                        profiles, self.L, beta, self.config.C, self.config.profile_epsilon, phi=state.phi
                    )
                    report.certificate = cert.to_json()
        except LabError as e:
            logger.warning(f"State {index} (E={state.pair.energy:.6f}) failed: {e.message}")
            report.error = e.to_dict()
        return report

    def summarize(self, reports: List[StateReport]) -> Dict[str, Any]:
        decays = [r.decay for r in reports if r.decay]
        satisfied = [d["satisfied"] for d in decays if d.get("satisfied") is not None]
        L = self.L
        half_hits: Dict[str, List[bool]] = {}
        for r in reports:
            for rec in r.contraction:
                if rec.get("kind") != "half" or rec.get("j") != "0" or "error" in rec:
                    continue
                q_n = self.freq.q(rec["n"])
                ratio = rec.get("log_ratio")
                below = ratio is None or ratio <= -HALF_RATIO_FACTOR * L * q_n
                half_hits.setdefault(str(rec["n"]), []).append(below)
        return {
            "states": len(reports),
            "failed": sum(r.error is not None for r in reports),
            "mean_rate": float(np.mean([d["rate"] for d in decays])) if decays else None,
            "decay_satisfied": sum(satisfied),
            "decay_checked": len(satisfied),
            "half_ratio_below_threshold": {n: sum(v) / len(v) for n, v in sorted(half_hits.items())},
            "half_ratio_factor": HALF_RATIO_FACTOR,
        }

    def run(self) -> LocalizeReport:
        warnings = []
        beta = self.beta()
        out_of_regime = self.L <= 2.0 * beta
        if out_of_regime:
            warnings.append(f"ln|lambda| = {self.L:.4f} <= 2 beta = {2 * beta:.4f}: outside the localization regime")
            logger.warning(warnings[-1])
        certify = self.theta.completely_resonant
        if not certify:
            warnings.append(f"{self.theta.describe()} is not completely resonant; certificate disabled")
            logger.warning(warnings[-1])

        states = self.states()
        self.eigenfunctions = [(i, s.phi) for i, s in enumerate(states)]
        reports = [self.analyze(i, s, beta, certify) for i, s in enumerate(states)]
        return LocalizeReport(
            config_hash=self.config.config_hash(),
            params={
                "lambda": self.config.lam,
                "N": self.config.N,
                "theta": self.theta.to_json(),
                "frequency": self.freq.to_json(),
                "scales": self.config.scales,
                "C": self.config.C,
                "profile_epsilon": self.config.profile_epsilon,
            },
            beta_estimate=beta,
            out_of_regime=out_of_regime,
            certificate_enabled=certify,
            states=reports,
            summary=self.summarize(reports),
            warnings=warnings,
        )
