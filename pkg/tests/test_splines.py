import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrwave.exceptions import InvalidArgumentError, KnotError
from mrwave.splines import (
    KnotGrid,
    SplineCurve,
    basis_functions,
    bspline,
    evaluate,
    greville,
    insert_knots,
    integrate,
    splitting_points,
    uniform_grid,
)


# -- oracles -----------------------------------------------------------------


def divided_difference_bspline(knots, order, t):
    """``N(t) = (t_m - t_0) [t_0..t_m] (x - t)_+^(m-1)`` by the divided-difference table."""
    knots = np.asarray(knots, dtype=float)
    vals = np.maximum(knots - t, 0.0) ** (order - 1)
    table = vals.copy()
    for level in range(1, order + 1):
        table = (table[1:] - table[:-1]) / (knots[level:] - knots[:-level])
    return (knots[-1] - knots[0]) * table[0]


def periodic_basis_oracle(grid, k, t):
    m, p = grid.order, grid.period
    kn = grid.knot(np.arange(k, k + m + 1))
    return sum(
        divided_difference_bspline(kn, m, t + j * p) if kn[0] <= t + j * p < kn[-1] else 0.0 for j in range(-2, 3)
    )


def blossom_coeffs(grid, poly_roots_fn):
    """Marsden coefficients: basis l gets the blossom at ``t_{l+1} .. t_{l+m-1}``."""
    m = grid.order
    pts = grid.knot(np.arange(grid.n_basis)[:, None] + np.arange(1, m)[None, :])
    return poly_roots_fn(pts)


@st.composite
def grids(draw, orders=(2, 3, 4, 5), min_n=None, max_n=24):
    m = draw(st.sampled_from(orders))
    n = draw(st.integers(min_value=min_n or m, max_value=max_n))
    gaps = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    period = draw(st.floats(0.5, 5.0))
    start = draw(st.floats(-2.0, 2.0))
    cum = np.concatenate([[0.0], np.cumsum(gaps)])
    return KnotGrid(start + period * cum / cum[-1], m)


def random_curve(grid, rng, n=2):
    return SplineCurve(grid, rng.standard_normal((grid.n_basis, n)))


# -- grid invariants -----------------------------------------------------------


def test_knots_must_increase():
    with pytest.raises(KnotError):
        KnotGrid([0.0, 0.5, 0.5, 1.0, 1.5], 2)


def test_grid_needs_at_least_m_intervals():
    with pytest.raises(KnotError):
        KnotGrid([0.0, 1.0, 2.0, 3.0], 4)


def test_virtual_knots_follow_periodic_rule():
    g = KnotGrid([0.0, 0.1, 0.5, 0.7, 1.0], 3)
    for k in (-2, -1, 1, 2):
        for ell in range(4):
            assert g.knot(k * 4 + ell) == pytest.approx(g.knots[ell] + k * g.period, abs=1e-15)


# -- evaluation -------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(grids(), st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_partition_of_unity(grid, ts):
    idx, val = basis_functions(grid, np.array(ts))
    assert np.max(np.abs(val.sum(axis=1) - 1.0)) <= 1e-13
    assert idx.shape == (len(ts), grid.order)


def test_cubic_all_ones_gives_ones():
    g = uniform_grid(12, 4, period=2.0)
    c = SplineCurve(g, np.ones((12, 3)))
    np.testing.assert_allclose(c(np.linspace(-3, 5, 101)), 1.0, atol=1e-14)


def test_linear_splines_reproduce_linears():
    g = KnotGrid([0.0, 0.3, 0.45, 0.9, 1.4, 2.0], 2)
    a, b = 0.7, -1.3
    coeffs = blossom_coeffs(g, lambda p: a + b * p[:, 0])
    curve = SplineCurve(g, coeffs)
    t = np.linspace(g.knots[1], g.knots[-1], 50, endpoint=False)
    np.testing.assert_allclose(curve(t)[:, 0], a + b * t, atol=1e-14)


def test_single_bspline_hand_value():
    assert bspline([0, 1, 2, 3, 4], 4, 0, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert divided_difference_bspline([0, 1, 2, 3, 4], 4, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 1.0), min_size=5, max_size=5), st.floats(0.0, 1.0))
def test_cox_de_boor_matches_divided_differences(gaps, u):
    knots = np.concatenate([[0.0], np.cumsum(gaps)])
    t = u * knots[4] * 0.999
    assert bspline(knots, 4, 0, t) == pytest.approx(divided_difference_bspline(knots[:5], 4, t), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(grids(orders=(2, 3, 4), min_n=5, max_n=10), st.floats(0.0, 1.0))
def test_periodic_basis_matches_oracle(grid, u):
    t = grid.start + u * grid.period * 0.9999
    idx, val = basis_functions(grid, t)
    dense = np.zeros(grid.n_basis)
    np.add.at(dense, idx[0], val[0])
    oracle = np.array([periodic_basis_oracle(grid, k, t) for k in range(grid.n_basis)])
    np.testing.assert_allclose(dense, oracle, atol=1e-8)


def test_locality():
    g = KnotGrid(np.cumsum(np.r_[0.0, np.linspace(0.05, 0.2, 10)]), 4)
    t = np.linspace(g.start, g.start + g.period, 400, endpoint=False)
    idx, val = basis_functions(g, t)
    for k in range(g.n_basis):
        lo, hi = g.knot(k), g.knot(k + g.order)
        inside = ((t - lo) % g.period) < (hi - lo)
        mask = (idx == k) & (np.abs(val) > 0)
        assert np.all(inside[np.any(mask, axis=1)])


def test_curve_is_periodic(rng):
    g = KnotGrid(np.sort(np.r_[0.0, rng.uniform(0, 3, 15), 3.0]), 4)
    curve = random_curve(g, rng, 3)
    t = rng.uniform(-5, 5, 200)
    np.testing.assert_allclose(curve(t), curve(t + g.period), atol=1e-13, rtol=0)


def test_derivative_matches_finite_difference(rng):
    g = uniform_grid(20, 4, period=1.0)
    curve = SplineCurve(g, np.sin(2 * np.pi * greville(g))[:, None])
    t = rng.uniform(0, 1, 50)
    h = 1e-6 * g.period
    fd = (curve(t + h) - curve(t - h)) / (2 * h)
    d1 = curve(t, 1)
    assert np.max(np.abs(d1 - fd)) <= 1e-5 * np.max(np.abs(d1))


def test_scalar_evaluation_shape(rng):
    curve = random_curve(uniform_grid(8, 3), rng, 4)
    assert curve(0.3).shape == (4,)
    assert curve(np.array([0.3, 0.4])).shape == (2, 4)


def test_derivative_order_out_of_range():
    with pytest.raises(InvalidArgumentError):
        basis_functions(uniform_grid(8, 3), 0.1, derivative_order=3)


def test_polynomial_reproduction_on_interior():
    g = KnotGrid([0.0, 0.2, 0.35, 0.6, 0.8, 1.1, 1.3, 1.7, 2.0], 4)
    # blossom of t^3 - 2 t^2 + 0.5 t at three arguments
    def blossom(p):
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        return a * b * c - 2 * (a * b + b * c + c * a) / 3 + 0.5 * (a + b + c) / 3

    curve = SplineCurve(g, blossom_coeffs(g, blossom))
    t = np.linspace(g.knots[3], g.knots[-1], 200, endpoint=False)
    exact = t**3 - 2 * t**2 + 0.5 * t
    assert np.max(np.abs(curve(t)[:, 0] - exact)) <= 1e-10 * np.max(np.abs(exact))


# -- knot insertion -----------------------------------------------------------------


def test_insert_nothing_is_identity(rng):
    curve = random_curve(uniform_grid(10, 4), rng)
    assert insert_knots(curve, []) is curve


def test_insert_midpoints_keeps_function(rng):
    g = KnotGrid(np.sort(np.r_[0.0, rng.uniform(0, 1, 19), 1.0]), 4)
    curve = random_curve(g, rng, 3)
    fine = insert_knots(curve, 0.5 * (g.knots[:-1] + g.knots[1:]))
    assert fine.grid.n_intervals == 2 * g.n_intervals
    t = rng.uniform(-1, 2, 1000)
    ref = curve(t)
    assert np.max(np.abs(fine(t) - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_insert_keeps_quadratic():
    g = KnotGrid(np.linspace(0.0, 2.0, 11), 4)
    curve = SplineCurve(g, blossom_coeffs(g, lambda p: (p[:, 0] * p[:, 1] + p[:, 1] * p[:, 2] + p[:, 2] * p[:, 0]) / 3))
    fine = insert_knots(curve, [0.91, 1.33, 1.71])
    t = np.linspace(g.knots[3], 2.0, 300, endpoint=False)
    np.testing.assert_allclose(fine(t)[:, 0], t**2, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(grids(orders=(2, 3, 4, 5), min_n=6), st.lists(st.floats(0.0, 0.999), min_size=1, max_size=8), st.integers(0, 2**31))
def test_knot_insertion_invariance(grid, fracs, seed):
    rng = np.random.default_rng(seed)
    new = np.setdiff1d(grid.start + np.array(fracs) * grid.period, grid.knots)
    gaps = np.diff(np.sort(np.r_[grid.knots, new]))
    if new.size == 0 or gaps.min() < 1e-6:
        return
    curve = random_curve(grid, rng)
    fine = insert_knots(curve, np.unique(new))
    t = grid.start + rng.uniform(-1, 2, 200) * grid.period
    ref = curve(t)
    assert np.max(np.abs(fine(t) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_insert_rejects_existing_knot(rng):
    curve = random_curve(uniform_grid(8, 4), rng)
    with pytest.raises(KnotError):
        insert_knots(curve, [curve.grid.knots[3]])


# -- splitting points -------------------------------------------------------------


def test_splitting_linear_uniform_are_knots():
    g = uniform_grid(8, 2, period=1.0)
    pts = splitting_points(g, "greville").points
    np.testing.assert_allclose(pts[:-1], g.knot(np.arange(1, 9)), atol=1e-15)


@pytest.mark.parametrize("kind", ["greville", "centered", "shifted", "midpoints"])
def test_splitting_uniform_cubic_spacing(kind):
    h = 0.125
    g = uniform_grid(8, 4, period=1.0)
    pts = splitting_points(g, kind).points
    assert pts.size == 9
    np.testing.assert_allclose(np.diff(pts), h, atol=1e-15)
    assert pts[-1] - pts[0] == pytest.approx(1.0, abs=0)


def test_splitting_nonuniform_quadratic_greville():
    g = KnotGrid([0.0, 0.1, 0.5, 1.0], 3)
    pts = splitting_points(g, "greville").points
    brute = [(g.knot(k + 1) + g.knot(k + 2)) / 2 for k in range(3)]
    np.testing.assert_allclose(pts[:-1], brute, atol=1e-15)
    np.testing.assert_allclose(pts[:-1], [0.3, 0.75, 1.05], atol=1e-15)
    assert pts[-1] - pts[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(grids())
def test_splitting_points_span_one_period(grid):
    sp_ = splitting_points(grid)
    assert sp_.n_cells == grid.n_basis
    span = sp_.points[-1] - sp_.points[0]
    assert abs(span - grid.period) <= 4 * np.finfo(float).eps * np.max(np.abs(sp_.points))
    assert np.all(np.diff(sp_.points) > 0)


def test_unknown_splitting_kind():
    with pytest.raises(InvalidArgumentError):
        splitting_points(uniform_grid(8, 4), "bogus")


# -- quadrature ----------------------------------------------------------------------


def test_integrate_constant():
    g = uniform_grid(10, 4, period=2.5)
    assert integrate(lambda t: np.ones_like(t), 0.0, 2.5, g)[0] == pytest.approx(2.5, abs=1e-14)


def test_gauss2_exact_for_cubic():
    g = KnotGrid([0.0, 0.25, 0.5, 0.75, 1.0], 2)
    g1 = KnotGrid(np.linspace(0.0, 1.0, 5), 4)
    assert integrate(lambda t: t**3, 0.0, 1.0, g1)[0] == pytest.approx(0.25, abs=1e-15)
    assert integrate(lambda t: t**3, 0.0, 1.0, g)[0] == pytest.approx(0.25, abs=1e-15)


def test_simpson_sine_integral():
    g = uniform_grid(16, 4)
    assert abs(integrate(lambda t: np.sin(2 * np.pi * t), 0.0, 1.0, g, rule="simpson")[0]) <= 1e-10


def test_unknown_rule():
    with pytest.raises(InvalidArgumentError):
        integrate(lambda t: t, 0.0, 1.0, uniform_grid(8, 4), rule="trapezoid")


def test_evaluate_is_linear_in_coefficients(rng):
    g = uniform_grid(9, 3)
    a, b = random_curve(g, rng), random_curve(g, rng)
    t = rng.uniform(0, 1, 30)
    np.testing.assert_allclose(evaluate(a.with_coeffs(a.coeffs + 2 * b.coeffs), t), a(t) + 2 * b(t), atol=1e-13)
