import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdlab.measures import (
    Coupling,
    DiscreteMeasure,
    MeasureError,
    ProductGrid,
    Support,
    conditional_residual,
    expectation,
    mix,
    second_marginal,
    transport_cost,
    tv_distance,
)

GRID = ProductGrid([[0.0], [1.0]], [0.0, 0.5, 1.0])
FIRST = Support([[0.0], [1.0], [0.0]], [0.5, 0.5, 1.0], [0.25, 0.5, 0.25])


def random_coupling(rng, first=FIRST, grid=GRID):
    g = rng.random((first.size, grid.size))
    return Coupling.normalized(first, grid, g)


def test_grid_layout():
    assert GRID.size == 6
    np.testing.assert_array_equal(GRID.w, [0, 0.5, 1, 0, 0.5, 1])
    np.testing.assert_array_equal(GRID.v[:, 0], [0, 0, 0, 1, 1, 1])
    assert GRID.index(1, 2) == 5


@pytest.mark.parametrize("v, w", [([[0.0]], []), ([[0.0]], [1.0, 0.0]), ([[0.0], [0.0]], [1.0]), ([[np.inf]], [0.0])])
def test_grid_rejects(v, w):
    with pytest.raises(MeasureError):
        ProductGrid(v, w)


def test_groups_in_first_appearance_order():
    assert FIRST.n_groups == 2
    np.testing.assert_array_equal(FIRST.group_of, [0, 1, 0])
    np.testing.assert_allclose(FIRST.group_mass, [0.5, 0.5])
    np.testing.assert_array_equal(FIRST.group_v[:, 0], [0.0, 1.0])


def test_support_rejects_bad_mass():
    with pytest.raises(MeasureError):
        Support([[0.0]], [0.0], [0.5])
    with pytest.raises(MeasureError):
        Support([[0.0], [1.0]], [0.0, 0.0], [1.5, -0.5])


def test_measure_rejects():
    with pytest.raises(MeasureError):
        DiscreteMeasure(GRID, np.ones(5) / 5)
    with pytest.raises(MeasureError):
        DiscreteMeasure(GRID, np.ones(6) / 3)


def test_from_measure_drops_empty_points():
    mu = DiscreteMeasure(GRID, [0.5, 0, 0, 0, 0, 0.5])
    s = Support.from_measure(mu)
    assert s.size == 2
    np.testing.assert_array_equal(s.w, [0.0, 1.0])


def test_conditional_residual_by_hand():
    # atom 0 (v=0) sends everything to w=1, atom 2 (v=0) stays at w=1 -> E[W|v=0] = 1
    # atom 1 (v=1) splits over w=0 and w=1 -> E[W|v=1] = 0.5
    g = np.zeros((3, 6))
    g[0, 2] = 0.25
    g[1, 3] = g[1, 5] = 0.25
    g[2, 2] = 0.25
    res = conditional_residual(Coupling(FIRST, GRID, g), [0.75, 0.5])
    np.testing.assert_allclose(res.values, [0.25, 0.0])
    assert res.l1() == pytest.approx(0.125)
    assert res.sup() == pytest.approx(0.25)


def test_coupling_row_sum_check():
    with pytest.raises(MeasureError):
        Coupling(FIRST, GRID, np.full((3, 6), 0.1))
    with pytest.raises(MeasureError):
        Coupling.normalized(FIRST, GRID, np.zeros((3, 6)))


def test_transport_cost_ignores_unused_infinite_pairs():
    g = np.zeros((3, 6))
    g[:, 0] = FIRST.mass
    cost = np.ones((3, 6))
    cost[:, 1:] = np.inf
    assert transport_cost(Coupling(FIRST, GRID, g), cost) == pytest.approx(1.0)


def test_mix_endpoints_are_exact():
    rng = np.random.default_rng(0)
    a, b = random_coupling(rng), random_coupling(rng)
    assert mix(a, b, 0.0) is a and mix(a, b, 1.0) is b
    with pytest.raises(MeasureError):
        mix(a, b, 1.5)


def brute_residual(gamma, h):
    # loop form of E[W | v] - h(v)
    out = []
    for g in range(gamma.first.n_groups):
        num = den = 0.0
        for j in range(gamma.first.size):
            if gamma.first.group_of[j] != g:
                continue
            den += gamma.first.mass[j]
            for k in range(gamma.grid.size):
                num += gamma.mass[j, k] * gamma.grid.w[k]
        out.append(num / den - h[g])
    return np.array(out)


@given(st.integers(0, 10_000))
def test_residual_matches_loop(seed):
    rng = np.random.default_rng(seed)
    gamma = random_coupling(rng)
    h = rng.normal(size=2)
    np.testing.assert_allclose(conditional_residual(gamma, h).values, brute_residual(gamma, h), atol=1e-14)


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_mixing_is_affine(seed, t):
    rng = np.random.default_rng(seed)
    a, b = random_coupling(rng), random_coupling(rng)
    m = mix(a, b, t)
    h = rng.normal(size=2)
    ra, rb, rm = (conditional_residual(x, h).values for x in (a, b, m))
    np.testing.assert_allclose(rm, (1 - t) * ra + t * rb, atol=1e-12)
    f = rng.normal(size=GRID.size)
    assert expectation(m, f) == pytest.approx((1 - t) * expectation(a, f) + t * expectation(b, f), abs=1e-12)
    assert tv_distance(a, m) == pytest.approx(t * tv_distance(a, b), abs=1e-12)


@given(st.integers(0, 10_000))
def test_tv_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_coupling(rng) for _ in range(3))
    assert tv_distance(a, a) == 0
    assert tv_distance(a, b) == pytest.approx(tv_distance(b, a))
    assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12
    assert 0 <= tv_distance(a, b) <= 1 + 1e-12


@given(st.integers(0, 10_000))
def test_second_marginal_is_probability(seed):
    gamma = random_coupling(np.random.default_rng(seed))
    nu = second_marginal(gamma)
    assert nu.mass.sum() == pytest.approx(1.0)
    f = np.arange(GRID.size, dtype=float)
    assert expectation(gamma, f) == pytest.approx(float(nu.mass @ f))
    assert expectation(gamma, np.tile(f, (3, 1))) == pytest.approx(float(nu.mass @ f))


def test_zero_mass_group_is_an_error():
    s = Support([[0.0], [1.0]], [0.0, 0.0], [1.0, 0.0])
    g = np.zeros((2, 6))
    g[0, 0] = 1.0
    with pytest.raises(MeasureError):
        conditional_residual(Coupling(s, GRID, g), [0.0, 0.0])
