"""Continued-fraction reports for a configured frequency."""

import math
from typing import Optional

from app.arith.cf_arith import Frequency, beta_estimate, diophantine_audit, resonance_exponents
from app.core.logging import get_logger
from app.schemas.reports import CFReport, ConvergentRow
from app.schemas.run_config import RunConfig

logger = get_logger(__name__)


class FrequencyService:
    """Convergent table, β estimate and Diophantine audit per scale."""

    def __init__(self, config: RunConfig, freq: Optional[Frequency] = None):
        self.config = config
        self.freq = freq or config.build_frequency()

    def convergent_rows(self, depth: int):
        rows = []
        for n in range(depth + 1):
            p, q = self.freq.convergent(n)
            q_next = self.freq.q(n + 1)
            ratio = math.log(q_next) / q if n >= 1 else None
            rows.append(ConvergentRow(n=n, a=self.freq.quotient(n), p=str(p), q=str(q), log_ratio=ratio))
        return rows

    def report(self) -> CFReport:
        depth = self.config.cf_depth
        logger.info(f"Continued-fraction report for {self.freq!r} to depth {depth}")
        builder = None
        if self.config.frequency == "beta":
            depth = min(depth, self.config.beta_depth)
            builder = {
                "target_beta": self.config.beta_target,
                "depth": self.config.beta_depth,
                "quotients": self.freq.quotients(self.config.beta_depth + 1),
            }

        audits = [diophantine_audit(self.freq, n).to_json() for n in range(depth + 1)]

        return CFReport(
            config_hash=self.config.config_hash(),
            frequency=self.freq.to_json(),
            convergents=self.convergent_rows(depth),
            beta_estimate=beta_estimate(self.freq, depth),
            beta_upto=resonance_exponents(self.freq).beta_upto(depth),
            diophantine=audits,
            builder=builder,
        )
