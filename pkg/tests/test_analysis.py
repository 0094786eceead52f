import math

import numpy as np
import pytest

from kappaquant.analysis import bound_check, error_attribution, kappa_profile, rank_profile
from kappaquant.conditioner import condiquant
from kappaquant.harness import LayerRecord
from kappaquant.matrix import spectral_norm
from kappaquant.quantizer import QuantSpec, calibrate_minmax, fake_quantize
from oracles import ill_conditioned


def _grid_data(rng, shape, spec):
    codes = rng.integers(0, spec.levels + 1, size=shape)
    return codes / spec.scale + spec.lower


def test_attribution_all_zero_when_grids_align():
    rng = np.random.default_rng(0)
    sx, sw = QuantSpec(3, 0.0, 7.0), QuantSpec(2, -1.0, 2.0)
    e = error_attribution(_grid_data(rng, (6, 4), sx), _grid_data(rng, (4, 5), sw), sx, sw)
    assert (e.exact, e.weight_only, e.act_only, e.second_order) == (0.0, 0.0, 0.0, 0.0)


def test_attribution_weight_exact_leaves_activation_term():
    rng = np.random.default_rng(1)
    sw = QuantSpec(2, -1.0, 2.0)
    x, w = rng.standard_normal((6, 4)), _grid_data(rng, (4, 5), sw)
    e = error_attribution(x, w, calibrate_minmax(x, 2), sw)
    assert e.weight_only == 0.0 and e.second_order == 0.0
    assert e.exact == pytest.approx(e.act_only, abs=1e-9)


def test_attribution_second_order_is_smallest_and_additive():
    rng = np.random.default_rng(2)
    smaller, worst = 0, 0.0
    for _ in range(500):
        n = int(rng.integers(8, 33))
        x, w = rng.standard_normal((int(rng.integers(16, 65)), n)), rng.standard_normal((n, n))
        bits = int(rng.integers(2, 5))
        sx = calibrate_minmax(x, bits)
        w *= (sx.upper - sx.lower) / (w.max() - w.min())
        e = error_attribution(x, w, sx, calibrate_minmax(w, bits))
        smaller += e.second_order <= min(e.weight_only, e.act_only)
        worst = max(worst, e.additivity_residual)
        assert e.exact <= e.weight_only + e.act_only + e.second_order + 1e-9
    assert smaller >= 475
    assert worst <= 1e-12


def test_bound_orthogonal_weight():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    x = rng.standard_normal((20, 8))
    spec = calibrate_minmax(x, 3)
    e = bound_check(x, q, spec)
    dx = fake_quantize(x, spec).error
    assert e.applicable and e.holds
    assert e.bound_rhs == pytest.approx(spectral_norm(dx) / spectral_norm(x), rel=1e-10)


def test_bound_scalar_weight_is_tight():
    x = np.random.default_rng(4).standard_normal((15, 6))
    spec = calibrate_minmax(x, 2)
    e = bound_check(x, 2.5 * np.eye(6), spec)
    rel = spectral_norm(fake_quantize(x, spec).error) / spectral_norm(x)
    assert e.observed_lhs == pytest.approx(rel, abs=1e-10)
    assert e.bound_rhs == pytest.approx(rel, abs=1e-10)


def test_bound_random_ensemble_holds():
    rng = np.random.default_rng(5)
    for _ in range(200):
        x, w = rng.standard_normal((30, 16)), rng.standard_normal((16, 16))
        e = bound_check(x, w, calibrate_minmax(x, int(rng.integers(2, 5))))
        assert e.holds


def test_bound_not_applicable_cases():
    x = np.random.default_rng(6).standard_normal((10, 4))
    spec = calibrate_minmax(x, 3)
    assert not bound_check(x, np.ones((4, 3)), spec).applicable
    singular = np.diag([1.0, 1.0, 1.0, 0.0])
    e = bound_check(x, singular, spec)
    assert not e.applicable and e.holds is None and e.kappa == math.inf
    assert not bound_check(np.zeros((5, 4)), np.eye(4), QuantSpec(2, -1.0, 1.0)).applicable


def test_rank_profile_cases():
    rng = np.random.default_rng(7)
    full = [LayerRecord(f"f{i}", np.eye(6), rng.standard_normal((20, 6))) for i in range(3)]
    assert rank_profile(full).mean_ratio == 1.0
    low = [
        LayerRecord(f"l{i}", np.eye(64), rng.standard_normal((100, 40)) @ rng.standard_normal((40, 64)))
        for i in range(3)
    ]
    prof = rank_profile(low)
    assert [e.rank for e in prof.entries] == [40, 40, 40] and prof.mean_ratio == 0.625
    zero = rank_profile([LayerRecord("z", np.eye(3), np.zeros((5, 3)))])
    assert (zero.entries[0].rank, zero.entries[0].rank_ratio) == (0, 0.0)
    with pytest.raises(ValueError):
        rank_profile([])


def test_rank_profile_survives_a_failing_layer(monkeypatch):
    import kappaquant.analysis as an
    from kappaquant.matrix import SvdConvergenceError

    real = an.numerical_rank

    def flaky(a):
        if a.shape == (7, 3):
            raise SvdConvergenceError("did not converge")
        return real(a)

    monkeypatch.setattr(an, "numerical_rank", flaky)
    layers = [LayerRecord("bad", np.eye(3), np.ones((7, 3))), LayerRecord("ok", np.eye(3), np.eye(3))]
    prof = rank_profile(layers)
    assert prof.entries[0].rank is None and "converge" in prof.entries[0].error
    assert prof.mean_ratio == 1.0


def test_rank_profile_mean_is_permutation_invariant():
    rng = np.random.default_rng(8)
    layers = [
        LayerRecord(f"l{r}", np.eye(12), rng.standard_normal((30, r)) @ rng.standard_normal((r, 12)))
        for r in (2, 5, 9, 12)
    ]
    ref = rank_profile(layers).mean_ratio
    for perm in [(3, 2, 1, 0), (1, 3, 0, 2)]:
        assert rank_profile([layers[i] for i in perm]).mean_ratio == pytest.approx(ref, abs=1e-15)


def test_kappa_profile_identical_and_infinite():
    ws = [np.diag([4.0, 1.0]), np.diag([1.0, 0.0]), np.eye(2)]
    prof = kappa_profile(["a", "b", "c"], ws, ws)
    assert all(e.kappa_before == e.kappa_after for e in prof.entries)
    assert prof.infinite_before == prof.infinite_after == 1
    assert prof.mean_before == pytest.approx(2.5)
    with pytest.raises(ValueError):
        kappa_profile(["a"], ws, ws)


def test_kappa_profile_after_conditioning_drops():
    rng = np.random.default_rng(9)
    before, after = [], []
    for _ in range(10):
        w0 = ill_conditioned(rng, 16, 10 ** rng.uniform(3, 4))
        x = rng.standard_normal((40, 16))
        x *= 10.0 / spectral_norm(x)
        before.append(w0)
        after.append(condiquant(w0, x).w_final)
    prof = kappa_profile([str(i) for i in range(10)], before, after)
    assert prof.mean_after < prof.mean_before
