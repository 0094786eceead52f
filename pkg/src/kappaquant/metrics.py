"""Image-quality style metrics for comparing network outputs."""

from __future__ import annotations

import math

import numpy as np

from .matrix import ShapeError

SSIM_WINDOW = 8


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    _same_shape(a, b)
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    """Mean SSIM over non-overlapping 8x8 windows (trailing rows/cols dropped)."""
    _same_shape(a, b)
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"ssim needs both dimensions >= {SSIM_WINDOW}, got {a.shape}")
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    nh, nw = h // SSIM_WINDOW, w // SSIM_WINDOW

    def windows(m):
        m = np.asarray(m, dtype=np.float64)[: nh * SSIM_WINDOW, : nw * SSIM_WINDOW]
        return m.reshape(nh, SSIM_WINDOW, nw, SSIM_WINDOW).transpose(0, 2, 1, 3).reshape(nh * nw, -1)

    wa, wb = windows(a), windows(b)
    mu_a, mu_b = wa.mean(axis=1), wb.mean(axis=1)
    da, db = wa - mu_a[:, None], wb - mu_b[:, None]
    var_a, var_b = (da * da).mean(axis=1), (db * db).mean(axis=1)
    cov = (da * db).mean(axis=1)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
