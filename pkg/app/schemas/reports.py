"""Report and record schemas for CLI outputs."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.core.config import get_settings

settings = get_settings()


class Versioned(BaseModel):
    """Provenance carried by every output."""

    model_config = ConfigDict(populate_by_name=True)

    config_hash: str
    version: str = Field(default_factory=lambda: settings.version)
    schema_version: int = Field(default_factory=lambda: settings.schema_version)


class AuditRecord(Versioned):
    """One line of an audit stream."""

    lemma: str
    params: Dict[str, Any] = Field(default_factory=dict)
    measured_log: Optional[float] = None
    bound_log: Optional[float] = None
    passed: Optional[bool] = Field(None, alias="pass")
    flags: List[str] = Field(default_factory=list)
    detail: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None


class ConvergentRow(BaseModel):
    n: int
    a: int
    p: str
    q: str
    log_ratio: Optional[float] = Field(None, description="ln q_(n+1) / q_n")


class CFReport(Versioned):
    frequency: Dict[str, Any]
    convergents: List[ConvergentRow]
    beta_estimate: float
    beta_upto: float
    diophantine: List[Dict[str, Any]]
    builder: Optional[Dict[str, Any]] = None


class LyapunovRow(BaseModel):
    energy: float
    k: int
    estimate: float
    target: Optional[float] = None
    deviation: Optional[float] = None


class StateReport(BaseModel):
    index: int
    energy: float
    center: int
    residual: float
    boundary_mass: float
    theta: Dict[str, Any]
    decay: Optional[Dict[str, Any]] = None
    profiles: List[Dict[str, Any]] = Field(default_factory=list)
    contraction: List[Dict[str, Any]] = Field(default_factory=list)
    certificate: Optional[Dict[str, Any]] = None
    error: Optional[Dict[str, Any]] = None


class LocalizeReport(Versioned):
    params: Dict[str, Any]
    beta_estimate: float
    out_of_regime: bool
    certificate_enabled: bool
    states: List[StateReport]
    summary: Dict[str, Any] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


class SpectrumReport(Versioned):
    lam: float = Field(..., alias="lambda")
    N: int
    thetas: List[float]
    energies: List[float]
    hausdorff: Optional[float] = None
