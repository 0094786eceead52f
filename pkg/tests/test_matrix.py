import math

import numpy as np
import pytest

from kappaquant import matrix
from kappaquant.matrix import (
    ShapeError,
    SvdConvergenceError,
    as_matrix,
    condition_number,
    fro_norm,
    matmul,
    numerical_rank,
    singular_values,
    spectral_norm,
    svd,
)
from oracles import matmul_loops, power_iteration_norm, singular_values_via_gram


def _roundtrip_error(a):
    f = svd(a)
    return fro_norm((f.u * f.sigma) @ f.vt - a) / fro_norm(a)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0])
    with pytest.raises(ShapeError):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    m = as_matrix([[1, 2], [3, 4]])
    assert m.dtype == np.float64 and not m.flags.writeable


def test_matmul_matches_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
    np.testing.assert_allclose(matmul(a, b), matmul_loops(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match="2x3 by 4x2"):
        matmul(np.ones((2, 3)), np.ones((4, 2)))


def test_svd_diagonal():
    f = svd(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(f.sigma, [3.0, 2.0, 1.0], atol=1e-14)


def test_svd_orthogonal_has_unit_spectrum():
    q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((10, 10)))
    np.testing.assert_allclose(svd(q).sigma, np.ones(10), atol=1e-12)


@pytest.mark.parametrize("shape", [(6, 4), (4, 6)])
def test_svd_against_gram_eigen_oracle(shape):
    a = np.random.default_rng(3).standard_normal(shape)
    ref = singular_values_via_gram(a if shape[0] >= shape[1] else a.T)
    np.testing.assert_allclose(singular_values(a), ref, rtol=1e-9)


def test_svd_factor_shapes_and_orthonormality():
    rng = np.random.default_rng(4)
    for shape in [(9, 5), (5, 9), (7, 7)]:
        a = rng.standard_normal(shape)
        f = svd(a)
        r = min(shape)
        assert f.u.shape == (shape[0], r) and f.sigma.shape == (r,) and f.vt.shape == (r, shape[1])
        np.testing.assert_allclose(f.u.T @ f.u, np.eye(r), atol=1e-10)
        np.testing.assert_allclose(f.vt @ f.vt.T, np.eye(r), atol=1e-10)
        assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)


def test_svd_rank_deficient_completes_basis():
    a = np.outer(np.arange(1.0, 7.0), np.arange(1.0, 5.0))
    f = svd(a)
    np.testing.assert_allclose(f.u.T @ f.u, np.eye(4), atol=1e-10)
    assert f.sigma[1:].max() == 0.0
    assert _roundtrip_error(a) < 1e-12


def test_svd_zero_matrix():
    f = svd(np.zeros((3, 2)))
    assert np.all(f.sigma == 0.0)
    np.testing.assert_allclose(f.u.T @ f.u, np.eye(2), atol=1e-12)


def test_svd_does_not_mutate_input():
    a = np.random.default_rng(5).standard_normal((4, 7))
    before = a.copy()
    svd(a)
    svd(a.T)
    assert np.array_equal(a, before)


def test_svd_roundtrip_randomized_shapes():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        m, n = rng.integers(1, 129, size=2)
        if rng.random() < 0.5:
            m, n = rng.integers(1, 33, size=2)
        a = rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-3, 3)
        worst = max(worst, _roundtrip_error(a))
    assert worst <= 1e-10


def test_svd_convergence_failure(monkeypatch):
    monkeypatch.setattr(matrix, "_jacobi_sweeps", lambda cols, v, floor: -1)
    with pytest.raises(SvdConvergenceError, match="did not converge"):
        svd(np.random.default_rng(0).standard_normal((4, 4)))


def test_spectral_norm_against_power_iteration():
    rng = np.random.default_rng(7)
    for shape in [(8, 8), (12, 5), (5, 12)]:
        a = rng.standard_normal(shape)
        assert spectral_norm(a) == pytest.approx(power_iteration_norm(a), rel=1e-8)


def test_fro_norm():
    assert fro_norm(np.array([[3.0, 4.0]])) == 5.0
    a = np.random.default_rng(8).standard_normal((6, 9))
    assert fro_norm(a) == pytest.approx(math.sqrt(np.sum(singular_values(a) ** 2)), rel=1e-12)


def test_condition_number_cases():
    assert condition_number(np.eye(5)) == pytest.approx(1.0, abs=1e-14)
    assert condition_number(np.diag([100.0, 1.0])) == pytest.approx(100.0, rel=1e-14)
    assert condition_number(np.array([[1.0, 1.0], [1.0, 1.0]])) == math.inf
    assert condition_number(np.zeros((3, 3))) == math.inf


def test_numerical_rank_cases():
    assert numerical_rank(np.eye(6)) == (6, 1.0)
    assert numerical_rank(np.outer([1.0, 2.0, 3.0], [4.0, -1.0]))[0] == 1
    rng = np.random.default_rng(9)
    a = rng.standard_normal((64, 40)) @ rng.standard_normal((40, 64))
    assert numerical_rank(a) == (40, 0.625)
    assert numerical_rank(np.zeros((4, 5))) == (0, 0.0)


def test_norm_properties_randomized():
    rng = np.random.default_rng(10)
    for _ in range(200):
        n, k, m = rng.integers(2, 20, size=3)
        a, b = rng.standard_normal((n, k)), rng.standard_normal((k, m))
        assert spectral_norm(a @ b) <= spectral_norm(a) * spectral_norm(b) * (1 + 1e-12)
        w = rng.standard_normal((k, k))
        x = rng.standard_normal((n, k))
        smin = singular_values(w)[-1]
        assert spectral_norm(x @ w) >= spectral_norm(x) * smin * (1 - 1e-12)
        kappa = condition_number(a)
        if math.isfinite(kappa):
            assert kappa >= 1.0
