"""
Dense real matrix arithmetic and spectral analysis.

Matrices are plain 2-D ``float64`` numpy arrays. :func:`as_matrix` is the
single validation gate; everything else assumes its output.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

EPS = np.finfo(np.float64).eps

# One-sided Jacobi parameters.
MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


class ShapeError(ValueError):
    """Raised when matrix dimensions are incompatible."""


class SvdConvergenceError(ArithmeticError):
    """Raised when the Jacobi sweeps fail to orthogonalize within the cap."""


class SvdFactors(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a read-only 2-D float64 array."""
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    m.flags.writeable = False
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product ``a @ b`` with a shape check naming both operands."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


@numba.njit(cache=True, nogil=True)
def _jacobi_sweeps(cols: np.ndarray, v: np.ndarray, floor: float) -> int:
    # cols holds the matrix columns as contiguous rows; rotations are
    # applied in place to cols and v. Returns sweeps used, -1 on failure.
    n, m = cols.shape
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    x = cols[p, i]
                    y = cols[q, i]
                    alpha += x * x
                    beta += y * y
                    gamma += x * y
                ag = abs(gamma)
                if ag <= floor or ag <= JACOBI_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sign = 1.0 if zeta >= 0.0 else -1.0
                t = sign / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    x = cols[p, i]
                    y = cols[q, i]
                    cols[p, i] = c * x - s * y
                    cols[q, i] = s * x + c * y
                for i in range(n):
                    x = v[p, i]
                    y = v[q, i]
                    v[p, i] = c * x - s * y
                    v[q, i] = s * x + c * y
        if not rotated:
            return sweep + 1
    return -1


def _jacobi_tall(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided (Hestenes) Jacobi on a tall matrix (rows >= cols)."""
    m, n = a.shape
    cols = np.array(a.T, order="C")
    vt = np.eye(n)
    floor = (EPS * EPS) * float(np.sum(a * a))
    if _jacobi_sweeps(cols, vt, floor) < 0:
        raise SvdConvergenceError(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps for shape {a.shape}")

    # Row j of vt now holds right singular vector j (unsorted).
    sigma = np.sqrt(np.einsum("ij,ij->i", cols, cols))
    order = np.argsort(-sigma, kind="stable")
    sigma, cols, vt = sigma[order], cols[order], vt[order]

    cutoff = max(m, n) * EPS * sigma[0]
    good = sigma > cutoff
    u = np.zeros((m, n))
    u[:, good] = cols[good].T / sigma[good]
    if not good.all():
        u = _complete_basis(u, good)
        sigma = np.where(good, sigma, 0.0)
    return u, sigma, vt


def _complete_basis(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    # Fill columns of negligible singular values with an orthonormal
    # complement of the retained ones.
    m, n = u.shape
    k = int(good.sum())
    q, _ = np.linalg.qr(u[:, good], mode="complete") if k else (np.eye(m), None)
    out = u.copy()
    out[:, ~good] = q[:, k : k + (n - k)]
    return out


def svd(a: np.ndarray) -> SvdFactors:
    """
    Thin singular value decomposition by one-sided Jacobi rotations.

    Parameters
    ----------
    a : ndarray
        A finite, non-empty real 2-D array of shape (m, n).

    Returns
    -------
    SvdFactors
        ``u`` (m, r) with orthonormal columns, ``sigma`` (r,) descending and
        non-negative, ``vt`` (r, n) with orthonormal rows, r = min(m, n).

    Raises
    ------
    SvdConvergenceError
        If the sweep cap is reached before all column pairs are orthogonal.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError(f"svd needs a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite values")
    if a.shape[0] >= a.shape[1]:
        u, s, vt = _jacobi_tall(a)
        return SvdFactors(u, s, vt)
    u, s, vt = _jacobi_tall(a.T)
    return SvdFactors(vt.T, s, u.T)


def singular_values(a: np.ndarray) -> np.ndarray:
    return svd(a).sigma


def spectral_norm(a: np.ndarray) -> float:
    return float(singular_values(a)[0])


def fro_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(a, dtype=np.float64))))


def rank_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    """Conventional numerical-rank cutoff ``max(m, n) * eps * sigma_max``."""
    return max(shape) * EPS * sigma_max


def kappa_from_sigma(sigma: np.ndarray, shape: tuple[int, int]) -> float:
    """Condition number from a descending spectrum; ``inf`` if singular."""
    smax, smin = float(sigma[0]), float(sigma[-1])
    if smin <= rank_tolerance(shape, smax):
        return math.inf
    return smax / smin


def condition_number(a: np.ndarray) -> float:
    return kappa_from_sigma(singular_values(a), a.shape)


def numerical_rank(a: np.ndarray) -> tuple[int, float]:
    """Return ``(rank, rank / min(rows, cols))``."""
    sigma = singular_values(a)
    tol = rank_tolerance(a.shape, float(sigma[0]))
    rank = int(np.count_nonzero(sigma > tol))
    return rank, rank / min(a.shape)
