"""Lyapunov exponent sweeps over energy."""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from app.arith.cf_arith import Frequency
from app.core.logging import get_logger
from app.operator.cocycle import OperatorParams, lyapunov
from app.operator.spectral import spectrum_sample
from app.schemas.reports import LyapunovRow
from app.schemas.run_config import RunConfig

logger = get_logger(__name__)

HEADER = ["energy", "k", "estimate", "target", "deviation"]


class LyapunovService:
    """(1/k)-normalized transfer-matrix growth averaged over phases."""

    def __init__(self, config: RunConfig, freq: Optional[Frequency] = None):
        self.config = config
        self.freq = freq or config.build_frequency()

    def energies(self) -> np.ndarray:
        """Grid energies, or evenly spaced picks from a sampled spectrum."""
        count = self.config.energy_steps
        if self.config.energy_source == "grid" or count == 0:
            return self.config.energies()
        sample = spectrum_sample(
            self.config.lam,
            self.freq,
            list(np.arange(self.config.theta_points) / self.config.theta_points),
            self.config.spectrum_N,
            workers=self.config.pool_size,
        )
        spectrum = np.asarray(sample.energies)
        picks = np.linspace(0, len(spectrum) - 1, count + 2)[1:-1].round().astype(int)
        return spectrum[picks]

    def phases(self, count: int) -> Optional[np.ndarray]:
        """Per-energy phase rows drawn from the seeded generator; None for midpoint sampling."""
        if self.config.phase_sampling == "midpoint":
            return None
        return self.config.rng().random((count, self.config.phase_samples))

    def sweep(self) -> List[LyapunovRow]:
        lam = self.config.lam
        theta = self.config.build_theta()
        k, samples = self.config.transfer_length, self.config.phase_samples
        target = math.log(abs(lam)) if abs(lam) > 1 else None
        energies = self.energies()
        phases = self.phases(len(energies))
        logger.info(
            f"Lyapunov sweep: {len(energies)} energies, k={k}, {samples} {self.config.phase_sampling} phases, "
            f"lambda={lam}"
        )

        def unit(i: int) -> LyapunovRow:
            energy = energies[i]
            thetas = None if phases is None else phases[i]
            est = lyapunov(OperatorParams(lam, self.freq, theta, float(energy)), k, samples, thetas)
            deviation = None if target is None else est.mean - target
            return LyapunovRow(energy=float(energy), k=k, estimate=est.mean, target=target, deviation=deviation)

        with ThreadPoolExecutor(max_workers=self.config.pool_size) as pool:
            return list(pool.map(unit, range(len(energies))))
