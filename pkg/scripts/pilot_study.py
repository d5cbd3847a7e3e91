"""Desk-scale pilot for the half-site contraction threshold.

Runs the localization pipeline on the golden frequency for a few couplings and
reports the distribution of ln(r_{1/2}/(r_0 + r_1)) / (L q_n) per scale. The
acceptance factor used by the localize summary is read off these quantiles.

    python scripts/pilot_study.py --lam 3 4 6 --states 20 --out runs/pilot.json
"""

import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from app.core.logging import get_logger, setup_logging  # noqa: E402
from app.schemas.run_config import load_run_config  # noqa: E402
from app.services.localization_service import HALF_RATIO_FACTOR, LocalizationService  # noqa: E402
from app.utils.io import write_json  # noqa: E402

logger = get_logger("pilot_study")

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def collect(lam: float, args: argparse.Namespace) -> Dict[str, List[float]]:
    config = load_run_config(
        args.config,
        [f"lambda={lam}", f"N={args.N}", f"states={args.states}", f"scales={args.scales}", *args.set],
    )
    report = LocalizationService(config).run()
    L = math.log(abs(lam))
    normalized: Dict[str, List[float]] = {}
    for state in report.states:
        for rec in state.contraction:
            if rec.get("kind") != "half" or rec.get("j") != "0" or rec.get("log_ratio") is None:
                continue
            q_n = config.build_frequency().q(rec["n"])
            normalized.setdefault(str(rec["n"]), []).append(rec["log_ratio"] / (L * q_n))
    return normalized


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lam", type=float, nargs="+", default=[3.0, 4.0, 6.0])
    parser.add_argument("--N", type=int, default=2000)
    parser.add_argument("--states", type=int, default=20)
    parser.add_argument("--scales", default="8,10")
    parser.add_argument("-c", "--config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", default="runs/pilot_study.json")
    args = parser.parse_args()
    setup_logging()

    results = []
    for lam in args.lam:
        for n, values in sorted(collect(lam, args).items()):
            qs = np.quantile(values, QUANTILES).tolist() if values else []
            below = sum(v <= -HALF_RATIO_FACTOR for v in values)
            logger.info(f"lambda={lam} n={n}: {len(values)} ratios, median {qs[2] if qs else float('nan'):.3f}")
            results.append(
                {
                    "lambda": lam,
                    "n": int(n),
                    "count": len(values),
                    "quantiles": dict(zip(map(str, QUANTILES), qs)),
                    "below_factor": below / len(values) if values else None,
                }
            )
    write_json(args.out, {"half_ratio_factor": HALF_RATIO_FACTOR, "results": results})
    return 0


if __name__ == "__main__":
    sys.exit(main())
