import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdeopt import prox
from pdeopt.field import Lattice, ScalarField
from pdeopt.problems.ex1 import u_true_fn

finite = st.floats(-50, 50, allow_nan=False)


def test_shrink_examples():
    np.testing.assert_allclose(prox.shrink(np.array([3.0, -3.0, 0.5, -0.5]), 1.0), [2.0, -2.0, 0.0, 0.0])


def test_box_examples():
    np.testing.assert_allclose(prox.project_box(np.array([-2.0, 0.1, 5.0]), -1.0, 2.0), [-1.0, 0.1, 2.0])
    np.testing.assert_allclose(prox.project_box(np.array([0.5, 0.2]), -np.inf, 0.3), [0.3, 0.2])


def test_sparse_box_threshold_before_clamp():
    # ex4 constants: zeta = rho / beta = 8, box [-1, 2]
    np.testing.assert_allclose(prox.prox_sparse_box(np.array([12.0, -9.5, 5.0]), 8.0, -1.0, 2.0), [2.0, -1.0, 0.0])


def test_invalid_arguments():
    with pytest.raises(ValueError):
        prox.shrink(np.ones(2), -1.0)
    with pytest.raises(ValueError):
        prox.project_box(np.ones(2), 1.0, 0.0)
    with pytest.raises(ValueError):
        prox.prox_sparse_box(np.ones(2), 1.0, 0.5, 2.0)


def test_scalar_proxes_match_grid_argmin_on_1000_instances():
    rng = np.random.default_rng(20)
    grid = np.linspace(-6, 6, 24001)
    h = grid[1] - grid[0]
    for _ in range(1000):
        v, zeta, beta = rng.uniform(-5, 5), rng.uniform(0, 2), rng.uniform(0.1, 2)
        a, b = rng.uniform(-4, 0), rng.uniform(0, 4)
        quad = 0.5 * beta * (grid - v) ** 2
        box = (grid >= a) & (grid <= b)
        l1 = zeta * np.abs(grid)
        assert abs(prox.shrink(np.array([v]), zeta / beta)[0] - grid[np.argmin(l1 + quad)]) <= h
        assert abs(prox.project_box(np.array([v]), a, b)[0] - grid[np.argmin(np.where(box, quad, np.inf))]) <= h
        got = prox.prox_sparse_box(np.array([v]), zeta / beta, a, b)[0]
        assert abs(got - grid[np.argmin(np.where(box, l1 + quad, np.inf))]) <= h


@settings(max_examples=200, deadline=None)
@given(finite, finite, st.floats(0, 10))
def test_shrink_is_firmly_nonexpansive(x, y, zeta):
    sx, sy = prox.shrink(np.array([x]), zeta)[0], prox.shrink(np.array([y]), zeta)[0]
    assert (sx - sy) ** 2 <= (sx - sy) * (x - y) + 1e-9


@settings(max_examples=200, deadline=None)
@given(finite, st.floats(-10, 0), st.floats(0, 10))
def test_projection_is_idempotent(v, a, b):
    p = prox.project_box(np.array([v]), a, b)
    assert np.array_equal(prox.project_box(p, a, b), p)
    assert a <= p[0] <= b


def _lat(n):
    return Lattice((0.0,), (1.0,), (n,))


def test_tv_prox_keeps_constants_and_zero_weight_is_identity():
    lat = _lat(40)
    c = ScalarField(lat, np.full(40, -2.5))
    np.testing.assert_allclose(prox.prox_tv(c, 0.7).values, c.values, atol=1e-10)
    v = ScalarField(lat, np.random.default_rng(0).standard_normal(40))
    np.testing.assert_allclose(prox.prox_tv(v, 0.0).values, v.values, atol=1e-14)


def test_tv_prox_rejects_bad_input():
    with pytest.raises(ValueError):
        prox.prox_tv(ScalarField.zeros(_lat(8)), -1.0)
    with pytest.raises(ValueError):
        prox.TvConfig(zeta=0.0)


def _tv_objective(z, v, weight, h):
    return weight * prox.total_variation(z, (h,), periodic=True) + 0.5 * h * np.sum((z - v) ** 2)


def _subgradient_reference(v, weight, h, steps=100_000):
    """Long subgradient run with diminishing steps; keeps the best iterate."""
    z = v.copy()
    best, best_val = z.copy(), _tv_objective(z, v, weight, h)
    for k in range(steps):
        d = np.sign(np.roll(z, -1) - z)
        g = weight * (np.roll(d, 1) - d) + h * (z - v)
        z = z - (0.02 / np.sqrt(k + 1)) * g
        val = _tv_objective(z, v, weight, h)
        if val < best_val:
            best, best_val = z.copy(), val
    return best, best_val


def test_tv_prox_matches_long_subgradient_run():
    n = 16
    lat = _lat(n)
    h = lat.spacing[0]
    v = np.where(np.arange(n) < 6, 1.0, -0.5)
    z = prox.prox_tv(ScalarField(lat, v), 0.1, prox.TvConfig(zeta=1.0, iterations=2000), 1.0).values
    _, ref = _subgradient_reference(v, 0.1, h)
    assert _tv_objective(z, v, 0.1, h) <= ref * (1 + 1e-4)


def test_tv_prox_beats_the_clean_signal_on_its_objective():
    lat = _lat(101)
    h = lat.spacing[0]
    x = lat.axes()[0]
    clean = np.where((x > 0.25) & (x < 0.75), 1.0, 0.0)
    v = clean + 0.1 * np.random.default_rng(5).standard_normal(101)
    z = prox.prox_tv(ScalarField(lat, v), 0.02, prox.TvConfig(zeta=0.05, iterations=200), 1.0).values
    assert _tv_objective(z, v, 0.02, h) <= _tv_objective(clean, v, 0.02, h)
    assert np.sqrt(np.mean((z - clean) ** 2)) < np.sqrt(np.mean((v - clean) ** 2))


def test_tv_prox_reflect_boundary_runs_in_2d():
    lat = Lattice((0.0, 0.0), (1.0, 1.0), (9, 9))
    v = ScalarField(lat, np.random.default_rng(2).standard_normal((9, 9)))
    z = prox.prox_tv(v, 0.05, prox.TvConfig(boundary="reflect"))
    assert prox.total_variation(z) < prox.total_variation(v)


def test_total_variation_of_piecewise_constant_potential():
    lat = _lat(101)
    u = u_true_fn(lat.axes()[0])
    assert prox.total_variation(u, (lat.spacing[0],)) == pytest.approx(1.6, abs=1e-12)
