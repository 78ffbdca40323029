import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from pdlab import cm_wasserstein as cm
from pdlab import instances as inst
from pdlab.lp import Status
from pdlab.measures import Coupling, ProductGrid, conditional_residual, tv_distance


# independent oracles


def highs_primal(x: cm.CmInstance) -> float:
    """Dense primal over all J*K pairs, infinite-cost pairs pinned to zero."""
    J, K = x.cost.shape
    fin = np.isfinite(x.cost)
    A_eq = []
    for j in range(J):
        row = np.zeros((J, K))
        row[j] = 1
        A_eq.append(row.ravel())
    for g in range(x.first.n_groups):
        row = np.zeros((J, K))
        for j in np.flatnonzero(x.first.group_of == g):
            row[j] = x.grid.w - x.h[g]
        A_eq.append(row.ravel())
    b_eq = np.r_[x.first.mass, np.zeros(x.first.n_groups)]
    A_ub = [np.where(fin, x.cost, 0.0).ravel()]
    bounds = [(0, None if f else 0) for f in fin.ravel()]
    res = linprog(-np.tile(x.f, J), A_ub=A_ub, b_ub=[x.rho], A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds,
                  method="highs")
    assert res.status == 0
    return -res.fun


def highs_dual(x: cm.CmInstance) -> float:
    """min lam rho + sum mu_j u_j  s.t.  u_j >= f_k - psi_g (w_k - h_g) - lam c_jk on finite pairs."""
    J, G = x.first.size, x.first.n_groups
    rows, rhs = [], []
    for j, k in zip(*np.nonzero(np.isfinite(x.cost))):
        g = x.first.group_of[j]
        r = np.zeros(1 + G + J)
        r[0] = -x.cost[j, k]
        r[1 + g] = -(x.grid.w[k] - x.h[g])
        r[1 + G + j] = -1.0
        rows.append(r)
        rhs.append(-x.f[k])
    c = np.r_[x.rho, np.zeros(G), x.first.mass]
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, bounds=[(0, None)] + [(None, None)] * (G + J), method="highs")
    assert res.status == 0
    return res.fun


def loop_dual(x: cm.CmInstance, lam: float, psi) -> float:
    total = lam * x.rho
    for j in range(x.first.size):
        g = x.first.group_of[j]
        best = -math.inf
        for k in range(x.grid.size):
            if math.isfinite(x.cost[j, k]):
                best = max(best, x.f[k] - psi[g] * (x.grid.w[k] - x.h[g]) - lam * x.cost[j, k])
        total += x.first.mass[j] * best
    return total


def min_norm_brute(x: cm.CmInstance, primal: float, slack: float = 1e-12) -> float:
    """min t  s.t.  |psi| <= t and the dual value is at most the primal optimum plus ``slack``."""
    J, G = x.first.size, x.first.n_groups
    # variables: lam, psi_g, u_j, t
    nv = 2 + G + J
    rows, rhs = [], []
    for j, k in zip(*np.nonzero(np.isfinite(x.cost))):
        g = x.first.group_of[j]
        r = np.zeros(nv)
        r[0] = -x.cost[j, k]
        r[1 + g] = -(x.grid.w[k] - x.h[g])
        r[1 + G + j] = -1.0
        rows.append(r)
        rhs.append(-x.f[k])
    r = np.zeros(nv)
    r[0] = x.rho
    r[1 + G : 1 + G + J] = x.first.mass
    rows.append(r)
    rhs.append(primal + slack)
    for g in range(G):
        for s in (1.0, -1.0):
            r = np.zeros(nv)
            r[1 + g] = s
            r[-1] = -1.0
            rows.append(r)
            rhs.append(0.0)
    c = np.zeros(nv)
    c[-1] = 1.0
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, bounds=[(0, None)] + [(None, None)] * (G + J) + [(0, None)],
                  method="highs")
    assert res.status == 0
    return res.fun


SEEDS = st.integers(0, 100_000)


# golden instances


def test_template_golden_values():
    x = inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)
    res = cm.solve_primal(x)
    assert res.value == pytest.approx(-0.75, abs=1e-8)
    assert res.cert.value == pytest.approx(-0.75, abs=1e-8)
    np.testing.assert_allclose(res.cert.psi, [1.0, 0.5], atol=1e-6)
    assert cm.eval_dual_ip(x, res.cert) == pytest.approx(-0.75, abs=1e-8)


def test_template_slack_equals_budget():
    rep = cm.check_assumption_a1(inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0))
    assert rep.a1_holds and rep.a_value == pytest.approx(1.0)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_mixing_counterexample_multiplier_grows_linearly(n):
    x = inst.example32(0.5, n)
    res = cm.solve_primal(x)
    assert res.value == pytest.approx(0.0, abs=1e-9)
    cert = cm.min_norm_certificate(x, res.value)
    assert np.max(np.abs(cert.psi)) == pytest.approx(n, abs=1e-6)
    assert cm.eval_dual_ip(x, cert) == pytest.approx(0.0, abs=1e-7)


def test_mixing_counterexample_brute_force_n4():
    x = inst.example32(0.5, 4)
    assert min_norm_brute(x, 0.0) == pytest.approx(4.0, abs=1e-8)
    cert = cm.min_norm_certificate(x, 0.0)
    assert float(np.max(np.abs(cert.psi))) == pytest.approx(4.0, abs=1e-6)


def test_mixing_counterexample_assumptions():
    rep = cm.check_assumptions(inst.example32(0.5, 8))
    assert rep.a_value == pytest.approx(0.5)
    assert not rep.a2_holds
    ext = cm.check_assumptions(inst.example32(0.5, 8, extend=True))
    assert ext.a1_holds and ext.a2_holds


@pytest.mark.parametrize("n", [4, 8, 16, 32, 64])
def test_extended_grid_closed_form(n):
    # optimum moves mass sqrt(eps) * n / (sqrt(eps) * n + 1) onto the point 1 + sqrt(eps)
    x = inst.example32(0.5, n, extend=True)
    res = cm.solve_primal(x)
    s = math.sqrt(0.5)
    assert res.value == pytest.approx(s / (s + 1 / n), abs=1e-9)
    cert = cm.min_norm_certificate(x, res.value)
    assert np.max(np.abs(cert.psi)) == pytest.approx(1 / (s + 1 / n), abs=1e-6)


def test_extended_grid_frozen_values():
    got = [cm.solve_primal(inst.example32(0.5, n, extend=True)).value for n in (4, 8, 16, 32, 64)]
    np.testing.assert_allclose(
        got, [0.7387961250362585, 0.8497788951776651, 0.9187896968583877, 0.9576762876752064, 0.9783806380088231],
        atol=1e-12,
    )


@pytest.mark.parametrize("n", [16, 64, 256])
def test_inverse_sqrt_multipliers(n):
    x = inst.example35(n)
    v = np.arange(1, n + 1) / n
    g = -1 / np.sqrt(v)
    res = cm.solve_primal(x)
    assert res.value == pytest.approx(g.mean() / 2, abs=1e-8)
    assert res.cert.value == pytest.approx(g.mean() / 2, abs=1e-8)
    np.testing.assert_allclose(res.cert.psi, -g / 2, atol=1e-6)
    assert np.max(np.abs(res.cert.psi)) == pytest.approx(math.sqrt(n) / 2, abs=1e-6)


@pytest.mark.parametrize("R", [10, 100, 1000])
def test_nonattainment_values(R):
    v = cm.solve_primal(inst.example33(R, 200)).value
    assert v == pytest.approx(-1 / (1 + R), rel=1e-9)
    assert -2 / (1 + R) <= v < 0


def test_truncated_normal_multipliers_reach_top_quantile():
    for J in (8, 16, 32):
        x = inst.lemma31(J, 10.0, 21)
        res = cm.solve_primal(x)
        cert = cm.min_norm_certificate(x, res.value)
        top = float(np.max(np.abs(inst.normal_quantiles(J))))
        assert np.max(np.abs(cert.psi)) >= top - 1e-6


def test_fat_cantor_dual_path():
    x = inst.fat_cantor(3, 64, 1.0)
    p = cm.solve_primal(x).value
    assert p == pytest.approx(-0.1875, abs=1e-12)
    vals = cm.continuous_dual_path(x, inst.fat_cantor_intervals(3), [1, 4, 16, 64, 256, 1024])
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(v >= p - 1e-12 for v in vals)
    assert vals[-1] == pytest.approx(p, abs=1e-12)


def test_distance_to_intervals():
    d = cm.distance_to_intervals([0.0, 0.5, 2.0, 3.5], [(0.0, 1.0), (3.0, 4.0)])
    np.testing.assert_allclose(d, [0.0, 0.0, 1.0, 0.0])


def test_refinement_study_exponent():
    rows = cm.refinement_study(lambda n: inst.example32(0.5, n), [4, 8, 16, 32])
    assert [r.size for r in rows] == [4, 8, 16, 32]
    assert cm.blowup_exponent(rows) == pytest.approx(1.0, abs=1e-6)
    assert set(rows[0].as_dict()) == {"n", "primal", "dual", "psi_norm", "lambda", "status"}
    assert math.isnan(cm.blowup_exponent(rows[:1]))


# randomized agreement with the oracles


@given(SEEDS)
def test_primal_matches_highs(seed):
    x = inst.random_cm(seed)
    assert cm.solve_primal(x).value == pytest.approx(highs_primal(x), abs=1e-8)


@given(SEEDS)
def test_strong_duality_and_ip_identity(seed):
    x = inst.random_cm(seed)
    res = cm.solve_primal(x)
    assert res.cert.value == pytest.approx(res.value, abs=1e-8)
    assert cm.eval_dual_ip(x, res.cert) == pytest.approx(res.value, abs=1e-8)
    assert highs_dual(x) == pytest.approx(res.value, abs=1e-7)


@given(SEEDS, st.floats(0, 5), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_weak_duality_and_loop_evaluator(seed, lam, psi):
    x = inst.random_cm(seed, n_v=3)
    psi = np.array(psi[: x.first.n_groups])
    cert = cm.DualCertificate(lam, psi)
    d = cm.eval_dual_ip(x, cert)
    assert d == pytest.approx(loop_dual(x, lam, psi), abs=1e-10)
    assert d >= cm.solve_primal(x).value - 1e-9


@given(SEEDS)
def test_primal_coupling_is_feasible(seed):
    x = inst.random_cm(seed)
    res = cm.solve_primal(x)
    assert cm.budget(x, res.coupling) <= x.rho + 1e-9
    assert conditional_residual(res.coupling, x.h).sup() <= 1e-9
    assert cm.objective(x, res.coupling) == pytest.approx(res.value, abs=1e-9)


@given(SEEDS)
def test_min_norm_certificate_is_optimal_and_smallest(seed):
    x = inst.random_cm(seed)
    res = cm.solve_primal(x)
    cert = cm.min_norm_certificate(x, res.value)
    assert cm.eval_dual_ip(x, cert) == pytest.approx(res.value, abs=1e-7)
    assert np.max(np.abs(cert.psi)) <= np.max(np.abs(res.cert.psi)) + 1e-6
    face = 1e-9 * max(1.0, abs(res.value))
    assert np.max(np.abs(cert.psi)) == pytest.approx(min_norm_brute(x, res.value, face), abs=1e-6)


@given(SEEDS, st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3))
def test_supergradient_inequality(seed, theta):
    x = inst.random_cm(seed)
    res = cm.solve_primal(x)
    theta = np.array(theta[: x.first.n_groups])
    (row,) = cm.subgradient_check(x, res.cert, [theta], res.value)
    assert row.p_theta <= row.bound + 1e-9
    assert row.slack >= -1e-9


@given(SEEDS)
def test_directional_slope_matches_multiplier(seed):
    x = inst.random_cm(seed)
    res = cm.solve_primal(x)
    psi = np.asarray(res.cert.psi)
    d = psi / np.max(np.abs(psi)) if np.any(psi) else np.ones_like(psi)
    slope = cm.directional_slope(x, d, 1e-4, res.value)
    assert slope == pytest.approx(float(np.sum(psi * d * x.group_mass)), abs=1e-3)


@given(SEEDS)
def test_budget_monotone(seed):
    x = inst.random_cm(seed)
    lo = cm.solve_primal(x).value
    hi = cm.solve_primal(x, rho=x.rho + 0.5).value
    assert hi >= lo - 1e-12


# assumptions and repairs


@given(SEEDS)
def test_random_instances_satisfy_both_conditions(seed):
    rep = cm.check_assumptions(inst.random_cm(seed))
    assert rep.a1_holds and rep.a2_holds
    assert rep.b_value == pytest.approx(min(rep.b_plus, rep.b_minus))
    x = inst.random_cm(seed)
    up = conditional_residual(rep.gamma_plus, x.h).values
    down = conditional_residual(rep.gamma_minus, x.h).values
    assert np.all(up >= rep.b_plus - 1e-9) and np.all(down <= -rep.b_minus + 1e-9)
    assert cm.budget(x, rep.gamma_plus) <= x.rho + 1e-9


@given(SEEDS, st.floats(0.01, 1.0))
def test_budget_repair(seed, eps):
    x = inst.random_cm(seed)
    a1 = cm.check_assumption_a1(x)
    wide = cm.solve_primal(x, rho=x.rho + eps)
    fixed = cm.lemma32_repair(wide.coupling, a1.gamma0, eps, a1.a_value)
    assert cm.budget(x, fixed) <= x.rho + 1e-10
    assert conditional_residual(fixed, x.h).sup() <= 1e-10
    t = eps / (a1.a_value + eps)
    bound = (1 - t) * wide.value + t * cm.objective(x, a1.gamma0)
    assert cm.objective(x, fixed) >= bound - 1e-10


@given(SEEDS, st.integers(0, 1000))
def test_conditional_repair(seed, draw):
    x = inst.random_cm(seed)
    rep = cm.check_assumptions(x)
    rng = np.random.default_rng(draw)
    mass = rng.random(x.cost.shape) * np.isfinite(x.cost)
    gamma = Coupling.normalized(x.first, x.grid, mass)
    fixed = cm.conditional_repair(gamma, rep.gamma_plus, rep.gamma_minus, x.h)
    assert conditional_residual(fixed, x.h).sup() <= 1e-12
    assert tv_distance(gamma, fixed) <= cm.tv_repair_bound(gamma, x.h, rep.b_value) + 1e-12


def test_repair_weights_by_hand():
    tp, tm = cm.repair_weights([-1.0, 2.0, 0.0], [1.0, 1.0, 1.0], [-2.0, -2.0, -2.0])
    np.testing.assert_allclose(tp, [0.5, 0.0, 0.0])
    np.testing.assert_allclose(tm, [0.0, 0.5, 0.0])
    with pytest.raises(cm.CmError):
        cm.repair_weights([-1.0], [-1.0], [-1.0])


def test_repair_argument_checks():
    x = inst.random_cm(0)
    g = cm.solve_primal(x).coupling
    with pytest.raises(cm.CmError):
        cm.lemma32_repair(g, g, 0.1, 0.0)
    with pytest.raises(cm.CmError):
        cm.lemma32_repair(g, g, -0.1, 1.0)


# construction and evaluation edge cases


def test_instance_validation():
    x = inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)
    with pytest.raises(cm.CmError):
        cm.CmInstance(x.first, x.grid, x.cost[:, :1], x.f, x.h, x.rho)
    with pytest.raises(cm.CmError):
        cm.CmInstance(x.first, x.grid, np.full(x.cost.shape, np.inf), x.f, x.h, x.rho)
    with pytest.raises(cm.CmError):
        cm.CmInstance(x.first, x.grid, x.cost, x.f, x.h, math.inf)
    with pytest.raises(cm.CmError):
        cm.DualCertificate(-1.0, [0.0, 0.0])


def test_new_grid_needs_rules():
    x = inst.random_cm(3)
    with pytest.raises(cm.GridRuleMissing):
        x.on_grid(ProductGrid(x.grid.v_points, np.linspace(-5, 5, 7)))
    assert x.on_grid(x.grid) is x


def test_inner_grid_uses_rules():
    x = inst.example32(0.5, 4)
    fine = ProductGrid([[0.0]], np.linspace(0, 1, 1001))
    cert = cm.DualCertificate(0.0, [-4.0])
    assert cm.eval_dual_ip(x, cert, fine) >= cm.eval_dual_ip(x, cert) - 1e-12


def test_infeasible_moment_constraints():
    x = inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)
    bad = cm.CmInstance(x.first, x.grid, x.cost, x.f, [5.0, 5.0], x.rho)
    res = cm.solve_primal(bad)
    assert res.status is Status.INFEASIBLE and res.value == -math.inf
    assert not cm.check_assumption_a1(bad).a1_holds


def test_discrepancy_of_reference_is_zero():
    x = inst.random_cm(11)
    zero = cm.check_assumption_a1(x)
    nu = zero.gamma0.mass.sum(axis=0)
    from pdlab.measures import DiscreteMeasure

    d = cm.compute_discrepancy(x, DiscreteMeasure(x.grid, nu / nu.sum()))
    assert d == pytest.approx(x.rho - zero.a_value, abs=1e-9)


@pytest.mark.parametrize("n, inside", [(64, False), (140, False), (141, True)])
def test_extended_grid_reaches_unit_band(n, inside):
    # smallest n with sqrt(eps) / (sqrt(eps) + 1/n) >= 0.99 at eps = 0.5 is 141
    v = cm.solve_primal(inst.example32(0.5, n, extend=True)).value
    assert (abs(v - 1) <= 1e-2) is inside
