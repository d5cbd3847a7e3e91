"""Scalar arithmetic backends: binary64 and arbitrary-precision (mpmath)."""

import math
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Any, Tuple

import mpmath

from app.core.config import get_settings
from app.core.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

LN2 = math.log(2.0)


def is_mp(value: Any) -> bool:
    """Whether ``value`` is an mpmath real (from any context)."""
    return hasattr(value, "_mpf_")


class ArithmeticBackend(ABC):
    """Abstract scalar backend used by the extended-range layer."""

    name: str = "abstract"

    @abstractmethod
    def convert(self, x: Any) -> Any:
        """Convert a Python number or Fraction to a backend real."""
        pass

    @abstractmethod
    def log(self, x: Any) -> Any:
        """Natural logarithm of a positive real."""
        pass

    @abstractmethod
    def exp(self, x: Any) -> Any:
        """Exponential."""
        pass

    @abstractmethod
    def log1p(self, x: Any) -> Any:
        """ln(1 + x) accurate near 0."""
        pass

    @abstractmethod
    def expm1(self, x: Any) -> Any:
        """e^x − 1 accurate near 0."""
        pass

    @abstractmethod
    def cos2pi(self, x: Any) -> Any:
        """cos(2πx)."""
        pass

    @abstractmethod
    def frexp(self, x: Any) -> Tuple[Any, int]:
        """Split into mantissa in [1/2, 1) and binary exponent."""
        pass

    def to_float(self, x: Any) -> float:
        """Round a backend real to binary64."""
        return float(x)


class Binary64Backend(ArithmeticBackend):
    """IEEE double backend built on the ``math`` module."""

    name = "binary64"

    def convert(self, x: Any) -> float:
        return float(x)

    def log(self, x: Any) -> float:
        return math.log(x)

    def exp(self, x: Any) -> float:
        return math.exp(x)

    def log1p(self, x: Any) -> float:
        return math.log1p(x)

    def expm1(self, x: Any) -> float:
        return math.expm1(x)

    def cos2pi(self, x: Any) -> float:
        return math.cos(2.0 * math.pi * (x - math.floor(x)))

    def frexp(self, x: Any) -> Tuple[float, int]:
        return math.frexp(x)


class MPBackend(ArithmeticBackend):
    """mpmath backend on a private context.

    Exponents are unbounded, so products of e^{Lk}-sized factors never
    overflow; the mantissa width is ``bits``.
    """

    name = "mp"

    def __init__(self, bits: int):
        """Initialize a private mpmath context with ``bits`` of mantissa."""
        self.ctx = mpmath.mp.clone()
        self.ctx.prec = bits
        self.bits = bits
        logger.debug(f"MP backend ready ({bits} bits)")

    def convert(self, x: Any) -> Any:
        if hasattr(x, "numerator") and hasattr(x, "denominator") and not isinstance(x, int):
            return self.ctx.mpf(x.numerator) / x.denominator
        return self.ctx.mpf(x)

    def log(self, x: Any) -> Any:
        return self.ctx.log(x)

    def exp(self, x: Any) -> Any:
        return self.ctx.exp(x)

    def log1p(self, x: Any) -> Any:
        return self.ctx.log1p(x)

    def expm1(self, x: Any) -> Any:
        return self.ctx.expm1(x)

    def cos2pi(self, x: Any) -> Any:
        return self.ctx.cospi(2 * self.convert(x))

    def frexp(self, x: Any) -> Tuple[Any, int]:
        return self.ctx.frexp(x)


_BINARY64 = Binary64Backend()


@lru_cache(maxsize=8)
def mp_backend(bits: int) -> MPBackend:
    """Cached MP backend for a given mantissa width."""
    return MPBackend(bits)


def get_backend(mode: str = None, bits: int = None) -> ArithmeticBackend:
    """Get the backend for a precision mode ("binary64" or "mp")."""
    mode = mode or settings.precision_mode
    if mode == "mp":
        return mp_backend(max(bits or settings.mp_precision_bits, 256))
    if mode == "binary64":
        return _BINARY64
    raise ValueError(f"Unknown precision mode: {mode}")


def backend_for(value: Any) -> ArithmeticBackend:
    """Pick the backend matching the type of ``value``."""
    if is_mp(value):
        return mp_backend(max(value.context.prec, 256))
    return _BINARY64
