import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog, minimize

from pdlab import instances as inst
from pdlab import robust as rb
from pdlab.conjugate import Affine, DiagQuadratic
from pdlab.lp import Status


def scipy_worst(prog: rb.UncertainProgram) -> float:
    """Vertex-enumerated robust counterpart solved by HiGHS (affine) or SLSQP (quadratic)."""
    n = prog.n
    if not prog.quadratic:
        A, b = [], []
        for i, f in enumerate(prog.all_functions):
            for z in prog.Z:
                g = f.at(z)
                A.append(np.r_[g.a, -1.0 if i == 0 else 0.0])
                b.append(-g.d)
        res = linprog(np.r_[np.zeros(n), 1.0], A_ub=np.array(A), b_ub=b, bounds=[(None, None)] * (n + 1),
                      method="highs")
        assert res.status == 0
        return res.fun
    cons = [{"type": "ineq", "fun": (lambda y, g=f.at(z): -g.value(y[:n]))}
            for f in prog.all_functions[1:] for z in prog.Z]
    cons += [{"type": "ineq", "fun": (lambda y, g=prog.functions[0].at(z): y[n] - g.value(y[:n]))} for z in prog.Z]
    x0 = 0.5 * (prog.x_bounds[0] + prog.x_bounds[1])
    y0 = np.r_[x0, prog.worst(0, x0) + 1.0]
    res = minimize(lambda y: y[n], y0, constraints=cons, method="SLSQP", options={"ftol": 1e-12, "maxiter": 500})
    return res.fun


def affine(a, d=0.0, P=None, c=None, zdim=1):
    a = np.asarray(a, dtype=float)
    P = np.zeros((a.size, zdim)) if P is None else P
    c = np.zeros(zdim) if c is None else c
    return rb.BiFunction(Affine(a, 0.0), P, c, d)


def test_toy_program():
    p = inst.toy_robust_lp()
    pw = rb.primal_worst(p)
    assert pw.optimal and pw.value == pytest.approx(1.0, abs=1e-12)
    pt = rb.db_construct_from_kkt(p, pw)
    assert rb.db_evaluate(p, pt) == pytest.approx(1.0, abs=1e-12)
    vals = [rb.nonconvex_db_evaluate(p, zt) for zt in rb.vertex_tuples(p)]
    np.testing.assert_allclose(vals, [1.0, 0.5], atol=1e-12)
    assert rb.check_prop41_i(p).holds
    assert not rb.check_prop41_ii(p)  # x >= 1 is unbounded above


def test_infeasible_and_unbounded():
    # x <= -1 and x >= 1
    infeas = rb.UncertainProgram([affine([1.0]), affine([1.0], 1.0), affine([-1.0], 1.0)], [[0.0]])
    assert rb.primal_worst(infeas).status is Status.INFEASIBLE
    assert not rb.check_prop41_ii(infeas)
    unb = rb.UncertainProgram([affine([1.0]), affine([1.0], -1.0)], [[0.0]])
    assert rb.primal_worst(unb).status is Status.UNBOUNDED
    q_infeas = rb.UncertainProgram(
        [affine([1.0]), rb.BiFunction(DiagQuadratic([2.0], [0.0], 1.0), [[0.0]], [0.0])], [[0.0]]
    )
    assert rb.primal_worst(q_infeas).status is Status.INFEASIBLE


def test_slater_failure_is_reported():
    # x1 <= 0 and -x1 <= 0 leave only the line x1 = 0
    p = rb.UncertainProgram(
        [affine([1.0, 0.0]), affine([0.0, 0.0], P=np.array([[1.0], [0.0]])), affine([-1.0, 0.0])], [[1.0], [2.0]]
    )
    rep = rb.check_prop41_i(p)
    assert not rep.holds and rep.value == pytest.approx(0.0, abs=1e-9)
    assert not rb.check_prop41_ii(p)
    pw = rb.primal_worst(p)
    assert pw.value == pytest.approx(0.0, abs=1e-12)


def test_box_counts_as_bounded():
    p = inst.random_pw(3)
    assert p.x_bounds is not None and rb.check_prop41_ii(p)
    assert p.m_total == p.m + 2 * p.n


@given(st.integers(0, 10_000))
def test_affine_worst_matches_highs(seed):
    p = inst.random_pw(seed)
    pw = rb.primal_worst(p)
    assert pw.optimal
    assert pw.value == pytest.approx(scipy_worst(p), abs=1e-8)
    assert np.all(p.F(pw.xstar)[1:] <= 1e-9)


@given(st.integers(0, 2_000))
def test_quadratic_worst_matches_slsqp(seed):
    p = inst.random_pw(seed, quadratic=True, m=2, n_vertices=3)
    pw = rb.primal_worst(p)
    assert pw.optimal and pw.method == "barrier"
    assert pw.value == pytest.approx(scipy_worst(p), abs=1e-6)
    assert np.all(p.F(pw.xstar)[1:] <= 1e-9)


@given(st.integers(0, 10_000), st.booleans())
def test_strong_duality_from_kkt(seed, quadratic):
    p = inst.random_pw(seed, quadratic=quadratic, m=2, n_vertices=3)
    pw = rb.primal_worst(p)
    pt = rb.db_construct_from_kkt(p, pw)
    rb.validate_db_point(p, pt)
    assert rb.db_evaluate(p, pt) == pytest.approx(pw.value, abs=1e-6)


@given(st.integers(0, 10_000), st.integers(0, 1000), st.booleans())
def test_weak_duality_at_random_points(seed, draw, finite):
    p = inst.random_pw(seed, m=2, n_vertices=3)
    pw = rb.primal_worst(p)
    pt = rb.random_db_point(p, np.random.default_rng(draw), finite=finite)
    assert rb.db_evaluate(p, pt) <= pw.value + 1e-9


@given(st.integers(0, 10_000))
def test_weak_duality_at_vertex_tuples(seed):
    p = inst.random_pw(seed, m=2, n_vertices=3)
    pw = rb.primal_worst(p)
    for zt in rb.vertex_tuples(p):
        assert rb.nonconvex_db_evaluate(p, zt) <= pw.value + 1e-9


@given(st.integers(0, 10_000), st.booleans())
def test_singleton_uncertainty_collapses(seed, quadratic):
    p = inst.random_pw(seed, quadratic=quadratic, n_vertices=1)
    pw = rb.primal_worst(p)
    lag = rb.nonconvex_db_evaluate(p, [p.Z[0]] * (p.m + 1))
    assert lag == pytest.approx(pw.value, abs=1e-8)
    assert rb.db_evaluate(p, rb.db_construct_from_kkt(p, pw)) == pytest.approx(lag, abs=1e-8)


@given(st.integers(0, 10_000))
def test_random_programs_are_strictly_feasible(seed):
    rep = rb.check_prop41_i(inst.random_pw(seed))
    assert rep.holds and rep.value < 0


def test_relative_interior_checker():
    # worst-case multiplier sits on the vertex z = 1, which is not in ri([1, 2])
    p = inst.toy_robust_lp()
    assert not rb.check_prop42(p, rb.db_construct_from_kkt(p))
    # min x s.t. z - x <= 0 over z in [1, 2]: any weight-one split is interior
    q = rb.UncertainProgram([affine([1.0]), affine([-1.0], c=np.array([1.0]))], [[1.0], [2.0]])
    pt = rb.DbPoint((np.array([1.5]), np.array([1.5])), np.array([1.0]), (np.array([1.0]), np.array([-1.0])))
    assert rb.check_prop42(q, pt)
    assert rb.db_evaluate(q, pt) == pytest.approx(1.5)
    assert rb.primal_worst(q).value == pytest.approx(2.0)
    edge = rb.DbPoint((np.array([1.5]), np.array([2.0])), np.array([1.0]), pt.dstar)
    assert not rb.check_prop42(q, edge)
    assert rb.db_evaluate(q, edge) == pytest.approx(2.0)


def test_db_point_validation():
    p = inst.toy_robust_lp()
    good = rb.db_construct_from_kkt(p)
    with pytest.raises(rb.RobustError):
        rb.validate_db_point(p, rb.DbPoint(good.z, good.wstar, (good.dstar[0] + 1.0, good.dstar[1])))
    with pytest.raises(rb.RobustError):
        rb.validate_db_point(p, rb.DbPoint(good.z, -good.wstar, good.dstar))
    with pytest.raises(rb.RobustError):
        rb.validate_db_point(p, rb.DbPoint((np.array([5.0]), good.z[1]), good.wstar, good.dstar))
    with pytest.raises(rb.RobustError):
        rb.validate_db_point(p, rb.DbPoint((good.z[0], np.array([1.0])), np.array([0.0]), good.dstar))
    with pytest.raises(rb.RobustError):
        rb.validate_db_point(p, rb.DbPoint(good.z[:1], good.wstar, good.dstar[:1]))


def test_infinite_conjugate_gives_minus_infinity():
    p = inst.toy_robust_lp()
    good = rb.db_construct_from_kkt(p)
    bad = rb.DbPoint(good.z, good.wstar, (good.dstar[0] + 0.5, good.dstar[1] - 0.5))
    assert rb.db_evaluate(p, bad) == -math.inf


def test_program_validation():
    with pytest.raises(rb.RobustError):
        rb.UncertainProgram([], [[0.0]])
    with pytest.raises(rb.RobustError):
        rb.UncertainProgram([affine([1.0])], np.zeros((0, 1)))
    with pytest.raises(rb.RobustError):
        rb.UncertainProgram([affine([1.0]), affine([1.0, 2.0])], [[0.0]])
    with pytest.raises(rb.RobustError):
        rb.UncertainProgram([affine([1.0])], [[0.0]], x_bounds=([1.0], [0.0]))
    with pytest.raises(rb.RobustError):
        rb.BiFunction(Affine([1.0]), np.zeros((2, 1)), [0.0])
    with pytest.raises(rb.RobustError):
        rb.nonconvex_db_evaluate(inst.toy_robust_lp(), [[1.0], [3.0]])


def test_vertex_tuples_skip_z_free_functions():
    p = inst.toy_robust_lp()
    tuples = list(rb.vertex_tuples(p))
    assert len(tuples) == 2  # only the constraint depends on z
    assert all(len(t) == p.m + 1 for t in tuples)
