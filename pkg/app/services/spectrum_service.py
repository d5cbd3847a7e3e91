"""Spectra sampled over a phase grid."""

from typing import Optional

import numpy as np

from app.arith.cf_arith import Frequency
from app.core.logging import get_logger
from app.operator.spectral import spectrum_sample
from app.schemas.reports import SpectrumReport
from app.schemas.run_config import RunConfig

logger = get_logger(__name__)


class SpectrumService:
    def __init__(self, config: RunConfig, freq: Optional[Frequency] = None):
        self.config = config
        self.freq = freq or config.build_frequency()

    def thetas(self):
        points = self.config.theta_points
        return (np.arange(points) / points).tolist()

    def report(self) -> SpectrumReport:
        sample = spectrum_sample(
            self.config.lam,
            self.freq,
            self.thetas(),
            self.config.spectrum_N,
            workers=self.config.pool_size,
        )
        return SpectrumReport(
            config_hash=self.config.config_hash(),
            lam=self.config.lam,
            N=sample.N,
            thetas=sample.thetas,
            energies=sample.energies,
            hausdorff=sample.hausdorff,
        )
