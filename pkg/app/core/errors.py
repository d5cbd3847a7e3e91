"""Lab exception hierarchy.

Library code raises these; the CLI maps ``exit_code`` to the process status.
"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for all lab errors."""

    exit_code = 1

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def to_dict(self) -> Dict[str, Any]:
        """Serialize for audit records."""
        return {"error": type(self).__name__, "message": self.message, **self.context}


class ConfigError(LabError):
    """Invalid run configuration."""

    exit_code = 2


class PreconditionViolated(LabError, ValueError):
    """An operation was called outside its stated domain."""


# Continued fractions


class PrecisionExhausted(LabError):
    """The working precision cannot certify the requested quantity."""

    exit_code = 3


class NonGeneric(ConfigError):
    """The input frequency is rational within the stated precision."""


class EnumerationCapExceeded(LabError):
    """An exhaustive scan would exceed the enumeration cap."""


class DepthOverflow(LabError):
    """A constructed denominator exceeds the integer budget."""


# Cocycle and determinants


class BudgetExceeded(LabError):
    """A product or box length exceeds its configured budget."""


class HypothesisViolated(LabError):
    """The window growth hypothesis fails for the supplied constants."""


class Singular(LabError):
    """E is an eigenvalue of the restricted operator."""


class NotAnEigenfunctionLocally(LabError):
    """Samples do not solve the eigen-equation on the interval."""


# Resonance analysis


class DegenerateNodes(LabError):
    """Two interpolation nodes coincide."""


class ScaleTooSmall(LabError):
    """No admissible n0 exists at this scale."""


class RangeExceeded(LabError):
    """A window reaches outside the sampled eigenfunction."""


class SiteTooResonant(LabError):
    """The site is too close to a resonant site."""


class DegenerateDenominator(LabError):
    """Contraction ratio has a vanishing denominator."""


class InsufficientProfiles(LabError):
    """Amplitude profiles are missing for a needed scale or index."""


class NotCompletelyResonant(PreconditionViolated):
    """The phase does not satisfy 2θ ∈ αZ + Z."""


# Spectral


class NoTemperateDirection(LabError):
    """No initial condition yields a polynomially bounded solution."""


class WindowTooSmall(LabError):
    """The fit window has too few sites."""
