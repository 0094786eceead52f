"""
Proximal gradient reconditioning of a linear layer's weight matrix.

Each iteration takes a gradient step on ``0.5 * ||X W - Y||_F**2`` (with
``Y = X W0`` fixed) and then applies the closed-form proximal operator of
``lambda * sum_i (sigma_i(W) - t)**2``, which pulls every singular value
toward the target ``t``:

    sigma_i* = (sigma_i + 2 * lambda * mu * t) / (1 + 2 * lambda * mu)

Pulling the spectrum together lowers the condition number; the gradient
step keeps the layer output close to the original.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .matrix import (
    ShapeError,
    SvdConvergenceError,
    fro_norm,
    kappa_from_sigma,
    matmul,
    svd,
)

TargetPolicy = Literal["mean", "median", "midpoint"]
POLICIES = ("mean", "median", "midpoint")


@dataclass(frozen=True)
class ConditionerConfig:
    eta: float = 1e-2
    lam: float = 0.003
    mu: float = 1.0
    max_iters: int = 50
    target_policy: TargetPolicy = "mean"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.target_policy not in POLICIES:
            raise ValueError(f"target_policy must be one of {POLICIES}, got {self.target_policy!r}")

    @property
    def lambda_mu(self) -> float:
        return self.lam * self.mu

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "lambda": self.lam,
            "mu": self.mu,
            "max_iters": self.max_iters,
            "target_policy": self.target_policy,
        }


@dataclass(frozen=True)
class TraceEntry:
    iter: int
    kappa: float
    output_rel_err: float
    objective: float


@dataclass
class ConditionResult:
    w_final: np.ndarray
    trace: list[TraceEntry] = field(default_factory=list)

    def trace_dicts(self) -> list[dict]:
        return [asdict(e) for e in self.trace]


def target_value(sigma, policy: str = "mean") -> float:
    """Shrinkage target ``t`` for a spectrum.

    ``median`` takes the lower median for even counts.
    """
    s = np.sort(np.asarray(sigma, dtype=np.float64))
    if s.size == 0:
        raise ValueError("target_value needs at least one singular value")
    if policy == "mean":
        return float(np.mean(s))
    if policy == "median":
        return float(s[(s.size - 1) // 2])
    if policy == "midpoint":
        return float(0.5 * (s[0] + s[-1]))
    raise ValueError(f"unknown target policy {policy!r}")


def _regularizer(sigma: np.ndarray, t: float) -> float:
    return float(np.sum((sigma - t) ** 2))


def regularizer_value(w: np.ndarray, t: float) -> float:
    if t < 0:
        raise ValueError(f"target t must be non-negative, got {t}")
    return _regularizer(svd(w).sigma, t)


def shrink_singular_values(sigma: np.ndarray, t: float, lambda_mu: float) -> np.ndarray:
    """Per-singular-value minimizer of 0.5*(s* - s)**2 + lambda_mu*(s* - t)**2."""
    c = 2.0 * lambda_mu
    return (sigma + c * t) / (1.0 + c)


def gradient(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of ``0.5 * ||x @ w - y||_F**2`` with respect to ``w``."""
    residual = matmul(x, w)
    if residual.shape != y.shape:
        raise ShapeError(f"target output shape {y.shape} does not match X @ W shape {residual.shape}")
    return x.T @ (residual - y)


def gradient_step(w: np.ndarray, x: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    return w - eta * gradient(w, x, y)


def _prox(w: np.ndarray, lambda_mu: float, policy: str) -> tuple[np.ndarray, float, np.ndarray]:
    f = svd(w)
    t = target_value(f.sigma, policy)
    shrunk = shrink_singular_values(f.sigma, t, lambda_mu)
    return (f.u * shrunk) @ f.vt, t, shrunk


def proximal_step(w: np.ndarray, lambda_mu: float, policy: str = "mean") -> tuple[np.ndarray, float]:
    """Proximal operator of the spectral-compaction penalty.

    Returns the reconstructed matrix and the target ``t`` that was applied.
    """
    if lambda_mu < 0:
        raise ValueError(f"lambda_mu must be non-negative, got {lambda_mu}")
    w_new, t, _ = _prox(w, lambda_mu, policy)
    return w_new, t


def _record(k, w, sigma, x, y, y_norm, config) -> TraceEntry:
    misfit = fro_norm(matmul(x, w) - y)
    if y_norm > 0:
        rel = misfit / y_norm
    else:
        rel = 0.0 if misfit == 0 else math.inf
    t = target_value(sigma, config.target_policy)
    objective = 0.5 * misfit**2 + config.lam * _regularizer(sigma, t)
    return TraceEntry(k, kappa_from_sigma(sigma, w.shape), rel, objective)


def condiquant(w0: np.ndarray, x: np.ndarray, config: ConditionerConfig | None = None) -> ConditionResult:
    """
    Recondition ``w0`` against calibration activations ``x``.

    Runs exactly ``config.max_iters`` (gradient step, proximal step)
    iterations. The trace has one entry per iteration plus the baseline at
    iteration 0; kappa and the regularizer are read off the spectrum the
    proximal step produced, so no extra decomposition is needed.

    Raises
    ------
    ShapeError
        If ``x.cols != w0.rows``.
    SvdConvergenceError
        With the failing iteration index in the message and on
        ``err.iteration``.
    """
    config = config or ConditionerConfig()
    if x.shape[1] != w0.shape[0]:
        raise ShapeError(f"activations {x.shape} incompatible with weight {w0.shape}")
    w = np.array(w0, dtype=np.float64)
    y = matmul(x, w)
    y_norm = fro_norm(y)
    use_gradient = fro_norm(x) > 0

    try:
        sigma = svd(w).sigma
    except SvdConvergenceError as err:
        err.iteration = 0
        raise
    trace = [_record(0, w, sigma, x, y, y_norm, config)]
    for k in range(1, config.max_iters + 1):
        if use_gradient:
            w = gradient_step(w, x, y, config.eta)
        try:
            w, _, sigma = _prox(w, config.lambda_mu, config.target_policy)
        except SvdConvergenceError as err:
            wrapped = SvdConvergenceError(f"iteration {k}: {err}")
            wrapped.iteration = k
            raise wrapped from err
        trace.append(_record(k, w, sigma, x, y, y_norm, config))
    return ConditionResult(w, trace)
