"""
Uniform affine fake quantization with per-tensor clipping bounds.

A quantizer with ``bits`` bits and bounds ``[lower, upper]`` has scale
``s = (2**bits - 1) / (upper - lower)``; values are clipped, mapped to
integer codes ``round(s * (x - lower))`` and mapped back as
``code / s + lower``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrix import fro_norm, spectral_norm

MIN_BITS, MAX_BITS = 2, 8
DEGENERATE_WIDEN = 1e-6


class QuantConfigError(ValueError):
    pass


def _check_bits(bits: int) -> int:
    if isinstance(bits, bool) or int(bits) != bits or not MIN_BITS <= bits <= MAX_BITS:
        raise QuantConfigError(f"bits must be an integer in [{MIN_BITS}, {MAX_BITS}], got {bits!r}")
    return int(bits)


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    lower: float
    upper: float

    def __post_init__(self):
        _check_bits(self.bits)
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise QuantConfigError("clipping bounds must be finite")
        if not self.lower < self.upper:
            raise QuantConfigError(f"lower bound {self.lower} must be below upper bound {self.upper}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise QuantConfigError(f"scale is not finite and positive for bounds ({self.lower}, {self.upper})")

    @property
    def levels(self) -> int:
        return 2**self.bits - 1

    @property
    def scale(self) -> float:
        return self.levels / (self.upper - self.lower)

    @property
    def step(self) -> float:
        return 1.0 / self.scale

    def to_dict(self) -> dict:
        return {"bits": self.bits, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class QuantResult:
    quantized: np.ndarray
    codes: np.ndarray
    error: np.ndarray


@dataclass(frozen=True)
class QuantErrorNorms:
    fro: float
    spectral: float
    relative_fro: Optional[float]
    relative_spectral: Optional[float]


def _bounds_spec(lo: float, hi: float, bits: int) -> QuantSpec:
    if lo == hi:
        lo, hi = lo - DEGENERATE_WIDEN, hi + DEGENERATE_WIDEN
    return QuantSpec(bits, float(lo), float(hi))


def calibrate_minmax(x: np.ndarray, bits: int) -> QuantSpec:
    """Bounds at the observed extremes of ``x``."""
    bits = _check_bits(bits)
    return _bounds_spec(float(np.min(x)), float(np.max(x)), bits)


def calibrate_percentile(x: np.ndarray, bits: int, p: float) -> QuantSpec:
    """Bounds at the ``p`` and ``1 - p`` linearly interpolated quantiles."""
    bits = _check_bits(bits)
    if not 0.0 < p < 0.5:
        raise QuantConfigError(f"percentile p must lie in (0, 0.5), got {p}")
    lo, hi = np.quantile(np.ravel(x), [p, 1.0 - p], method="linear")
    return _bounds_spec(float(lo), float(hi), bits)


def fake_quantize(x: np.ndarray, spec: QuantSpec) -> QuantResult:
    s = spec.scale
    clipped = np.clip(x, spec.lower, spec.upper)
    # np.rint rounds half to even.
    codes = np.rint(s * (clipped - spec.lower))
    quantized = codes / s + spec.lower
    return QuantResult(quantized, codes.astype(np.int64), quantized - x)


def quant_error_norms(x: np.ndarray, spec: QuantSpec) -> QuantErrorNorms:
    """Absolute and relative norms of the fake-quantization error of ``x``.

    Relative entries are ``None`` when ``x`` is the zero matrix.
    """
    delta = fake_quantize(x, spec).error
    fro, spec_norm = fro_norm(delta), spectral_norm(delta)
    x_fro = fro_norm(x)
    if x_fro == 0.0:
        return QuantErrorNorms(fro, spec_norm, None, None)
    return QuantErrorNorms(fro, spec_norm, fro / x_fro, spec_norm / spectral_norm(x))
