"""Diagnostics: quantization-error attribution, sensitivity bounds, rank and kappa profiles."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .matrix import (
    ShapeError,
    condition_number,
    fro_norm,
    matmul,
    numerical_rank,
    spectral_norm,
)
from .quantizer import QuantSpec, fake_quantize

ADDITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class AttributionEntry:
    exact: float
    weight_only: float
    act_only: float
    second_order: float
    additivity_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SensitivityEntry:
    kappa: float
    bound_rhs: Optional[float]
    observed_lhs: Optional[float]
    rank_ratio: float
    applicable: bool

    @property
    def holds(self) -> Optional[bool]:
        if not self.applicable:
            return None
        return self.observed_lhs <= self.bound_rhs + 1e-9

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds"] = self.holds
        return d


@dataclass(frozen=True)
class RankEntry:
    name: str
    rank: Optional[int]
    rank_ratio: Optional[float]
    error: Optional[str] = None


@dataclass
class RankProfile:
    entries: list[RankEntry]
    mean_ratio: Optional[float]

    def to_dict(self) -> dict:
        return {"layers": [asdict(e) for e in self.entries], "mean_rank_ratio": self.mean_ratio}


@dataclass(frozen=True)
class KappaEntry:
    name: str
    kappa_before: float
    kappa_after: float


@dataclass
class KappaProfile:
    entries: list[KappaEntry]
    mean_before: Optional[float]
    mean_after: Optional[float]
    infinite_before: int
    infinite_after: int

    def to_dict(self) -> dict:
        return {
            "layers": [asdict(e) for e in self.entries],
            "mean_kappa_before": self.mean_before,
            "mean_kappa_after": self.mean_after,
            "infinite_before": self.infinite_before,
            "infinite_after": self.infinite_after,
        }


def error_attribution(x: np.ndarray, w: np.ndarray, spec_x: QuantSpec, spec_w: QuantSpec) -> AttributionEntry:
    """Split ``X^ W^ - X W`` into the weight, activation and second-order terms.

    The additivity residual is the max element-wise gap between the exact
    error and the sum of the three terms, computed before any norm.
    """
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"activations {x.shape} incompatible with weight {w.shape}")
    qx, qw = fake_quantize(x, spec_x), fake_quantize(w, spec_w)
    dx, dw = qx.error, qw.error
    exact = qx.quantized @ qw.quantized - x @ w
    t_w, t_x, t_2 = x @ dw, dx @ w, dx @ dw
    residual = float(np.max(np.abs(exact - (t_w + t_x + t_2))))
    return AttributionEntry(fro_norm(exact), fro_norm(t_w), fro_norm(t_x), fro_norm(t_2), residual)


def bound_check(x: np.ndarray, w: np.ndarray, spec_x: QuantSpec) -> SensitivityEntry:
    """
    Compare the relative output error from activation quantization with the
    condition-number bound ``kappa(W) * ||dX||_2 / ||X||_2``.

    The bound is only guaranteed for square full-rank ``w``; otherwise, or
    when ``X W`` is zero, the entry is marked not applicable.
    """
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"activations {x.shape} incompatible with weight {w.shape}")
    kappa = condition_number(w)
    _, ratio = numerical_rank(x)
    square = w.shape[0] == w.shape[1]
    y_norm = spectral_norm(matmul(x, w))
    if not square or not math.isfinite(kappa) or y_norm == 0.0:
        return SensitivityEntry(kappa, None, None, ratio, False)
    dx = fake_quantize(x, spec_x).error
    lhs = spectral_norm(dx @ w) / y_norm
    rhs = kappa * spectral_norm(dx) / spectral_norm(x)
    return SensitivityEntry(kappa, rhs, lhs, ratio, True)


def rank_profile(layers: Sequence) -> RankProfile:
    """Numerical rank of each layer's activation matrix.

    A layer whose decomposition fails is recorded with its error and left
    out of the mean; the rest of the batch still runs.
    """
    if not layers:
        raise ValueError("rank_profile needs at least one layer")
    entries = []
    for layer in layers:
        try:
            rank, ratio = numerical_rank(layer.activation)
            entries.append(RankEntry(layer.name, rank, ratio))
        except ArithmeticError as err:
            entries.append(RankEntry(layer.name, None, None, str(err)))
    ratios = [e.rank_ratio for e in entries if e.rank_ratio is not None]
    return RankProfile(entries, float(np.mean(ratios)) if ratios else None)


def _finite_mean(values: list[float]) -> tuple[Optional[float], int]:
    finite = [v for v in values if math.isfinite(v)]
    return (float(np.mean(finite)) if finite else None), len(values) - len(finite)


def kappa_profile(names: Sequence[str], before: Sequence[np.ndarray], after: Sequence[np.ndarray]) -> KappaProfile:
    if not len(names) == len(before) == len(after):
        raise ValueError("names, before and after must have equal length")
    entries = [KappaEntry(n, condition_number(b), condition_number(a)) for n, b, a in zip(names, before, after)]
    mean_b, inf_b = _finite_mean([e.kappa_before for e in entries])
    mean_a, inf_a = _finite_mean([e.kappa_after for e in entries])
    return KappaProfile(entries, mean_b, mean_a, inf_b, inf_a)
