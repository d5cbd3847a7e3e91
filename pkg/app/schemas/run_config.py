"""Run configuration schema.

A run is described by a flat ``key=value`` file (parsed with python-dotenv)
plus ``--set key=value`` overrides. Precedence: field defaults < file < overrides.
"""

from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.arith.cf_arith import Frequency, PhaseSpec, cf_expand, frequency_with_beta
from app.core.config import get_settings
from app.core.errors import ConfigError
from app.utils.hashing import sha256_hex

settings = get_settings()

LIST_FIELDS = ("quotients", "scales", "j_values")


class RunConfig(BaseModel):
    """Validated parameters of one run."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # Frequency
    frequency: Literal["golden", "silver", "quotients", "periodic", "real", "beta"] = "golden"
    quotients: List[int] = Field(default_factory=list)
    alpha: Optional[str] = Field(None, description="Decimal expansion of a real frequency in (0, 1)")
    alpha_digits: Optional[int] = Field(None, ge=1)
    beta_target: Optional[float] = Field(None, gt=0)
    beta_depth: int = Field(4, ge=2, le=12)
    cf_depth: int = Field(20, ge=1, le=500)

    # Operator
    lam: float = Field(4.0, alias="lambda")
    theta_m: int = 0
    theta_offset: str = "0"
    theta: Optional[str] = Field(None, description="Real phase; overrides theta_m/theta_offset")

    # Scales and audit constants
    scales: List[int] = Field(default_factory=lambda: [8, 10])
    j_values: List[int] = Field(default_factory=lambda: [1])
    epsilon: float = Field(0.05, gt=0, lt=0.125)
    profile_epsilon: float = Field(0.01, gt=0, lt=0.025, description="Window radius factor for resonant amplitudes")
    C: float = Field(10.0, gt=0)

    # Truncation and localization
    N: int = Field(2000, ge=1)
    states: int = Field(10, ge=1)

    # Lyapunov sweeps
    energy_source: Literal["grid", "spectrum"] = "grid"
    energy_min: float = -3.0
    energy_max: float = 3.0
    energy_steps: int = Field(20, ge=0)
    transfer_length: int = Field(10_000, ge=1)
    phase_samples: int = Field(64, ge=1)
    phase_sampling: Literal["midpoint", "random"] = "midpoint"

    # Spectra
    spectrum_N: int = Field(200, ge=1)
    theta_points: int = Field(16, ge=1)

    # Run
    seed: int = Field(0, ge=0)
    output_dir: str = "runs"
    precision_mode: Literal["binary64", "mp"] = "binary64"
    workers: Optional[int] = Field(None, ge=1)

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.replace(";", ",").split(",") if part.strip()]
        return value

    @field_validator("theta_offset")
    @classmethod
    def check_offset(cls, value: str) -> str:
        try:
            Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"theta_offset must be a rational such as 0, 1 or 1/2, got {value!r}")
        return value

    @field_validator("theta", "alpha")
    @classmethod
    def check_real(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        try:
            Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"expected a decimal number, got {value!r}")
        return value

    @field_validator("scales")
    @classmethod
    def check_scales(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value):
            raise ValueError("scales must be positive integers")
        return sorted(set(value))

    @model_validator(mode="after")
    def check_frequency(self) -> "RunConfig":
        if self.frequency in ("quotients", "periodic") and not self.quotients:
            raise ValueError(f"frequency={self.frequency} needs a non-empty quotients list")
        if any(a < 1 for a in self.quotients):
            raise ValueError("quotients must be positive integers")
        if self.frequency == "real" and self.alpha is None:
            raise ValueError("frequency=real needs alpha")
        if self.frequency == "beta" and self.beta_target is None:
            raise ValueError("frequency=beta needs beta_target")
        if self.energy_max < self.energy_min:
            raise ValueError("energy_max must be >= energy_min")
        return self

    # Builders

    def build_frequency(self) -> Frequency:
        if self.frequency == "golden":
            return Frequency.golden()
        if self.frequency == "silver":
            return Frequency.silver()
        if self.frequency == "quotients":
            return Frequency.from_quotients(self.quotients)
        if self.frequency == "periodic":
            return Frequency.periodic(self.quotients)
        if self.frequency == "real":
            return cf_expand(self.alpha, self.cf_depth, self.alpha_digits)
        return frequency_with_beta(self.beta_target, self.beta_depth)

    def build_theta(self) -> PhaseSpec:
        if self.theta is not None:
            return PhaseSpec.from_real(self.theta)
        return PhaseSpec(self.theta_m, Fraction(self.theta_offset))

    def energies(self) -> np.ndarray:
        return np.linspace(self.energy_min, self.energy_max, self.energy_steps)

    def rng(self) -> np.random.Generator:
        """Generator for random phase sampling, seeded by ``seed``."""
        return np.random.default_rng(self.seed)

    @property
    def pool_size(self) -> int:
        return self.workers or settings.workers

    def config_hash(self) -> str:
        return sha256_hex(self.model_dump(mode="json", by_alias=True))


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"]) or "config"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """``key=value`` strings from the command line."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_run_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Defaults, then the config file, then ``--set`` overrides."""
    values: Dict[str, Any] = {}
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found", {"path": str(path)})
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None and v != ""})
    values.update(parse_overrides(overrides))
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {_format_errors(exc)}") from exc
