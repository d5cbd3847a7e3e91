"""Application configuration using Pydantic Settings."""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Lab-wide settings.

    Run-specific parameters (frequency, coupling, scales) live in
    :class:`app.schemas.run_config.RunConfig`; these are the knobs that apply
    to every run on a machine.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="AMO_",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "amo-lab"
    version: str = "0.3.0"
    schema_version: int = 1
    environment: str = "development"
    log_level: str = "INFO"

    # Arithmetic
    precision_mode: str = Field("binary64", pattern="^(binary64|mp)$")
    mp_precision_bits: int = Field(320, ge=256)
    fixed_point_bits: int = Field(192, ge=96)
    integer_budget_bits: int = Field(200_000, ge=64)

    # Budgets
    transfer_budget: int = Field(2_000_000, ge=1)
    box_budget: int = Field(2_000_000, ge=1)
    enumeration_cap: int = Field(100_000, ge=1)
    generalized_range_budget: int = Field(20_000, ge=1)

    # Audit defaults
    default_epsilon: float = Field(0.05, gt=0, lt=0.125)
    default_c: float = Field(10.0, gt=0)
    numerator_min_length: int = Field(20, ge=1)

    # Lagrange maximization
    lagrange_exact_max_nodes: int = Field(64, ge=2)
    lagrange_grid_points: int = Field(100_000, ge=1000)

    # Spectral
    boundary_mass_tolerance: float = Field(1e-8, gt=0)
    dedup_resolution: float = Field(1e-6, gt=0)
    generalized_sup_cap: float = Field(1e3, gt=1)
    rate_cap: float = Field(50.0, gt=0)

    # Concurrency
    workers: int = Field(4, ge=1)

    @property
    def is_development(self) -> bool:
        """Check if running in development mode."""
        return self.environment.lower() in ("development", "dev", "local")

    @property
    def use_mp(self) -> bool:
        """Whether the high-precision backend is the default."""
        return self.precision_mode == "mp"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
