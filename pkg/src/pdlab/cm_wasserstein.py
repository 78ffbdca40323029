"""Discretized transport DRO with conditional moment constraints.

The primal maximizes ``E[f]`` over couplings ``gamma`` whose first marginal is
the reference support, subject to a transport budget ``E[c] <= rho`` and, for
every group of atoms sharing the same ``v``, the moment equation
``E[W | v] = h(v)``. Pairs with infinite cost are dropped from the LP.

Dual certificates are ``(lam, psi)``. The interchanged dual is

    lam * rho + sum_j mu_j * max_k [f_k - psi(v_j) (w_k - h(v_j)) - lam c_jk]

with the max taken over finite-cost pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .lp import LpProblem, LpSolution, Status, solve_lp
from .measures import (
    Coupling,
    DiscreteMeasure,
    MeasureError,
    ProductGrid,
    Support,
    conditional_residual,
    expectation,
    mix,
    transport_cost,
)

CostRule = Callable[[Support, ProductGrid], np.ndarray]
ObjectiveRule = Callable[[ProductGrid], np.ndarray]


class CmError(ValueError):
    pass


class GridRuleMissing(CmError):
    """Raised when evaluation on a new grid needs a cost or objective rule the instance lacks."""


@dataclass(frozen=True)
class CmInstance:
    first: Support
    grid: ProductGrid
    cost: np.ndarray
    f: np.ndarray
    h: np.ndarray
    rho: float
    cost_rule: CostRule | None = field(default=None, compare=False, repr=False)
    f_rule: ObjectiveRule | None = field(default=None, compare=False, repr=False)
    name: str = "custom"

    def __post_init__(self):
        if isinstance(self.first, DiscreteMeasure):
            object.__setattr__(self, "first", Support.from_measure(self.first))
        J, K = self.first.size, self.grid.size
        cost = np.array(self.cost, dtype=float)
        f = np.array(self.f, dtype=float).reshape(-1)
        h = np.array(self.h, dtype=float).reshape(-1)
        if cost.shape != (J, K):
            raise CmError(f"cost has shape {cost.shape}, expected {(J, K)}")
        if f.shape != (K,):
            raise CmError(f"f has {f.shape[0]} entries, grid has {K}")
        if h.shape != (self.first.n_groups,):
            raise CmError(f"h has {h.shape[0]} entries for {self.first.n_groups} groups")
        if not math.isfinite(self.rho):
            raise CmError("rho must be finite")
        if not np.all(np.isfinite(f)) or not np.all(np.isfinite(h)):
            raise CmError("f and h must be finite")
        if np.isnan(cost).any() or np.any(cost == -np.inf):
            raise CmError("cost entries must be real or +inf")
        if np.any(self.first.mass <= 0):
            raise CmError("reference atoms must carry positive mass")
        dead = np.flatnonzero(~np.isfinite(cost).any(axis=1))
        if dead.size:
            raise CmError(f"support atom {int(dead[0])} has no finite-cost destination")
        for name, arr in (("cost", cost), ("f", f), ("h", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def group_mass(self) -> np.ndarray:
        return self.first.group_mass

    def on_grid(self, grid: ProductGrid) -> "CmInstance":
        """Same instance with the destination grid replaced, via the stored rules."""
        if grid == self.grid:
            return self
        if self.cost_rule is None or self.f_rule is None:
            raise GridRuleMissing(f"instance {self.name!r} has no cost/objective rule for a new grid")
        return replace(self, grid=grid, cost=self.cost_rule(self.first, grid), f=self.f_rule(grid))


@dataclass(frozen=True)
class DualCertificate:
    lam: float
    psi: np.ndarray
    value: float = math.nan

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float).reshape(-1)
        if not self.lam >= 0:
            raise CmError(f"lambda must be nonnegative, got {self.lam}")
        if not np.all(np.isfinite(psi)):
            raise CmError("psi must be finite")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class PrimalResult:
    status: Status
    value: float
    coupling: Coupling | None
    cert: DualCertificate | None
    lp: LpSolution | None = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class AssumptionReport:
    a1_holds: bool
    a_value: float
    gamma0: Coupling | None
    a2_holds: bool = False
    b_value: float = -math.inf
    b_plus: float = -math.inf
    b_minus: float = -math.inf
    gamma_plus: Coupling | None = None
    gamma_minus: Coupling | None = None


# LP assembly


def _pairs(inst: CmInstance):
    jj, kk = np.nonzero(np.isfinite(inst.cost))
    return jj, kk


def _moment_rows(inst: CmInstance, jj, kk, h=None) -> np.ndarray:
    """Rows ``(1/nu_g) sum_{j in g} gamma_jk (w_k - h_g)``, one per group."""
    h = inst.h if h is None else h
    G = inst.first.n_groups
    g = inst.first.group_of[jj]
    coef = (inst.grid.w[kk] - h[g]) / inst.group_mass[g]
    rows = np.zeros((G, jj.size))
    rows[g, np.arange(jj.size)] = coef
    return rows


def _marginal_rows(inst: CmInstance, jj) -> np.ndarray:
    rows = np.zeros((inst.first.size, jj.size))
    rows[jj, np.arange(jj.size)] = 1.0
    return rows


def _coupling(inst: CmInstance, jj, kk, x) -> Coupling:
    mass = np.zeros((inst.first.size, inst.grid.size))
    mass[jj, kk] = x
    return Coupling.normalized(inst.first, inst.grid, mass)


def solve_primal(inst: CmInstance, theta=None, rho: float | None = None) -> PrimalResult:
    """Solve the coupling LP; ``theta`` shifts ``h`` per group, ``rho`` overrides the budget."""
    jj, kk = _pairs(inst)
    P, J, G = jj.size, inst.first.size, inst.first.n_groups
    theta = np.zeros(G) if theta is None else np.asarray(theta, dtype=float).reshape(G)
    budget = inst.rho if rho is None else float(rho)
    cost = inst.cost[jj, kk]
    A = np.zeros((J + 1 + G, P + 1))
    A[:J, :P] = _marginal_rows(inst, jj)
    A[J, :P] = cost
    A[J, P] = 1.0
    A[J + 1 :, :P] = _moment_rows(inst, jj, kk, inst.h + theta)
    b = np.concatenate([inst.first.mass, [budget], np.zeros(G)])
    c = np.concatenate([-inst.f[kk], [0.0]])
    sol = solve_lp(LpProblem(c, A, b))
    if sol.status is not Status.OPTIMAL:
        return PrimalResult(sol.status, -math.inf, None, None, sol)
    y = sol.duals_eq
    lam = max(0.0, -float(y[J]))
    psi = -y[J + 1 :] / inst.group_mass
    value = 0.0 - sol.value  # avoid printing -0
    cert = DualCertificate(lam, psi, lam * budget - float(inst.first.mass @ y[:J]))
    return PrimalResult(Status.OPTIMAL, value, _coupling(inst, jj, kk, sol.primal[:P]), cert, sol)


def eval_dual_ip(inst: CmInstance, cert: DualCertificate, inner_grid: ProductGrid | None = None) -> float:
    """Interchanged dual objective of ``cert``, optionally on a finer destination grid."""
    target = inst if inner_grid is None else inst.on_grid(inner_grid)
    psi = np.asarray(cert.psi)
    if psi.shape != (inst.first.n_groups,):
        raise CmError(f"psi has {psi.shape[0]} entries for {inst.first.n_groups} groups")
    g = inst.first.group_of
    w = target.grid.w
    with np.errstate(invalid="ignore"):
        lc = np.where(np.isfinite(target.cost), cert.lam * target.cost, np.inf)
    inner = target.f[None, :] - psi[g][:, None] * (w[None, :] - inst.h[g][:, None]) - lc
    return cert.lam * inst.rho + float(inst.first.mass @ inner.max(axis=1))


def compute_discrepancy(inst: CmInstance, target: DiscreteMeasure) -> float:
    """Least transport cost from the reference to ``target`` under the moment constraints."""
    if target.grid != inst.grid:
        raise CmError("target measure is not on the instance grid")
    jj, kk = _pairs(inst)
    J, K, G = inst.first.size, inst.grid.size, inst.first.n_groups
    cols = np.zeros((K, jj.size))
    cols[kk, np.arange(jj.size)] = 1.0
    A = np.vstack([_marginal_rows(inst, jj), cols, _moment_rows(inst, jj, kk)])
    b = np.concatenate([inst.first.mass, target.mass, np.zeros(G)])
    sol = solve_lp(LpProblem(inst.cost[jj, kk], A, b))
    return sol.value if sol.optimal else math.inf


# assumptions


def check_assumption_a1(inst: CmInstance, tol: float = 1e-9) -> AssumptionReport:
    """Slack ``a = rho - min E[c]`` over couplings meeting the moment constraints."""
    jj, kk = _pairs(inst)
    A = np.vstack([_marginal_rows(inst, jj), _moment_rows(inst, jj, kk)])
    b = np.concatenate([inst.first.mass, np.zeros(inst.first.n_groups)])
    sol = solve_lp(LpProblem(inst.cost[jj, kk], A, b))
    if not sol.optimal:
        return AssumptionReport(False, -math.inf, None)
    a = inst.rho - sol.value
    return AssumptionReport(a > tol, a, _coupling(inst, jj, kk, sol.primal))


def _moment_margin(inst: CmInstance, sign: float):
    """max b such that some budget-feasible coupling has ``sign * residual_g >= b`` in every group."""
    jj, kk = _pairs(inst)
    P, J, G = jj.size, inst.first.size, inst.first.n_groups
    # columns: pairs | b | budget slack | group slacks
    A = np.zeros((J + 1 + G, P + 2 + G))
    A[:J, :P] = _marginal_rows(inst, jj)
    A[J, :P] = inst.cost[jj, kk]
    A[J, P + 1] = 1.0
    A[J + 1 :, :P] = sign * _moment_rows(inst, jj, kk)
    A[J + 1 :, P] = -1.0
    A[J + 1 :, P + 2 :] = -np.eye(G)
    b = np.concatenate([inst.first.mass, [inst.rho], np.zeros(G)])
    c = np.zeros(P + 2 + G)
    c[P] = -1.0
    lower = np.zeros(P + 2 + G)
    lower[P] = -np.inf
    sol = solve_lp(LpProblem(c, A, b, lower))
    if not sol.optimal:
        return -math.inf, None
    return float(sol.primal[P]), _coupling(inst, jj, kk, sol.primal[:P])


def check_assumption_a2(inst: CmInstance, tol: float = 1e-9) -> AssumptionReport:
    """Uniform two-sided room ``b`` to push every conditional mean up and down."""
    bp, gp = _moment_margin(inst, 1.0)
    bm, gm = _moment_margin(inst, -1.0)
    b = min(bp, bm)
    a1 = check_assumption_a1(inst, tol)
    return replace(a1, a2_holds=b > tol, b_value=b, b_plus=bp, b_minus=bm, gamma_plus=gp, gamma_minus=gm)


def check_assumptions(inst: CmInstance, tol: float = 1e-9) -> AssumptionReport:
    return check_assumption_a2(inst, tol)


# repairs


def lemma32_repair(gamma_eps: Coupling, gamma0: Coupling, eps: float, a: float) -> Coupling:
    """Blend a budget-``rho + eps`` coupling with a slack-``a`` one to land back on budget ``rho``."""
    if a <= 0:
        raise CmError(f"slack a must be positive, got {a}")
    if eps < 0:
        raise CmError(f"eps must be nonnegative, got {eps}")
    return mix(gamma_eps, gamma0, eps / (a + eps))


def repair_weights(res, res_plus, res_minus):
    """Per-group weights ``(t_plus, t_minus)`` that cancel ``res`` using the two pushing couplings."""
    res, rp, rm = (np.asarray(r, dtype=float) for r in (res, res_plus, res_minus))
    need_up = res < 0
    need_down = res > 0
    if np.any(need_up & (rp <= 0)) or np.any(need_down & (rm >= 0)):
        raise CmError("pushing coupling has the wrong residual sign for some group")
    with np.errstate(invalid="ignore", divide="ignore"):
        tp = np.where(need_up, -res / (np.abs(res) + np.abs(rp)), 0.0)
        tm = np.where(need_down, res / (np.abs(res) + np.abs(rm)), 0.0)
    return tp, tm


def conditional_repair(gamma: Coupling, gamma_plus: Coupling, gamma_minus: Coupling, h) -> Coupling:
    """Zero each group's conditional residual by mixing in rows of ``gamma_plus`` or ``gamma_minus``."""
    if not (gamma.same_index(gamma_plus) and gamma.same_index(gamma_minus)):
        raise MeasureError("couplings live on different index sets")
    A = conditional_residual(gamma, h).values
    Ap = conditional_residual(gamma_plus, h).values
    Am = conditional_residual(gamma_minus, h).values
    tp, tm = repair_weights(A, Ap, Am)
    g = gamma.first.group_of
    tpj, tmj = tp[g][:, None], tm[g][:, None]
    mass = (1.0 - tpj - tmj) * gamma.mass + tpj * gamma_plus.mass + tmj * gamma_minus.mass
    return Coupling(gamma.first, gamma.grid, np.clip(mass, 0.0, None))


def tv_repair_bound(gamma: Coupling, h, b: float) -> float:
    """Upper bound ``(1/b) sum_g |A(g)| nu_g`` on the distance moved by :func:`conditional_repair`."""
    return conditional_residual(gamma, h).l1() / b


# dual face diagnostics


def min_norm_certificate(inst: CmInstance, primal_value: float | None = None, face_tol: float = 1e-9):
    """Dual optimal certificate with the smallest ``max |psi|``.

    Solved through the LP dual of ``min t`` over the (slightly relaxed) optimal
    face, which keeps the row count at ``J + G + 2``.
    """
    if primal_value is None:
        res = solve_primal(inst)
        if not res.feasible:
            raise CmError("instance is infeasible")
        primal_value = res.value
    U = primal_value + face_tol * max(1.0, abs(primal_value))
    jj, kk = _pairs(inst)
    P, J, G = jj.size, inst.first.size, inst.first.n_groups
    # columns: gamma pairs | tau | budget slack | alpha_g | beta_g
    n = P + 2 + 2 * G
    A = np.zeros((J + 1 + G + 1, n))
    A[:J, :P] = _marginal_rows(inst, jj)
    A[:J, P] = -inst.first.mass
    A[J, :P] = inst.cost[jj, kk]
    A[J, P] = -inst.rho
    A[J, P + 1] = 1.0
    # unscaled moment rows so the row duals are psi itself
    A[J + 1 : J + 1 + G, :P] = _moment_rows(inst, jj, kk) * inst.group_mass[:, None]
    A[J + 1 : J + 1 + G, P + 2 : P + 2 + G] = -np.eye(G)
    A[J + 1 : J + 1 + G, P + 2 + G :] = np.eye(G)
    A[-1, P + 2 :] = 1.0
    b = np.zeros(J + 2 + G)
    b[-1] = 1.0
    c = np.zeros(n)
    c[:P] = -inst.f[kk]
    c[P] = U
    sol = solve_lp(LpProblem(c, A, b))
    if not sol.optimal:
        raise CmError(f"minimum-norm selection LP returned {sol.status.value}")
    y = sol.duals_eq
    lam = max(0.0, -float(y[J]))
    psi = -y[J + 1 : J + 1 + G]
    return DualCertificate(lam, psi, lam * inst.rho - float(inst.first.mass @ y[:J]))


@dataclass(frozen=True)
class RefinementRow:
    size: int
    primal: float
    dual: float
    psi_norm: float
    lam: float
    status: str = "ok"

    def as_dict(self) -> dict:
        return {
            "n": self.size,
            "primal": self.primal,
            "dual": self.dual,
            "psi_norm": self.psi_norm,
            "lambda": self.lam,
            "status": self.status,
        }


def refinement_study(family: Callable[[int], CmInstance], sizes: Sequence[int]) -> list[RefinementRow]:
    rows = []
    for n in sizes:
        inst = family(n)
        res = solve_primal(inst)
        if not res.feasible:
            rows.append(RefinementRow(n, -math.inf, math.nan, math.nan, math.nan, res.status.value))
            continue
        cert = min_norm_certificate(inst, res.value)
        rows.append(RefinementRow(n, res.value, res.cert.value, float(np.max(np.abs(cert.psi))), cert.lam))
    return rows


def blowup_exponent(rows: Sequence[RefinementRow]) -> float:
    """Least-squares slope of ``log psi_norm`` against ``log n``."""
    pts = [(r.size, r.psi_norm) for r in rows if r.psi_norm > 0 and math.isfinite(r.psi_norm)]
    if len(pts) < 2:
        return math.nan
    x, y = np.log(np.array(pts, dtype=float)).T
    return float(np.polyfit(x, y, 1)[0])


# perturbation function


@dataclass(frozen=True)
class SupergradientRow:
    theta: np.ndarray
    p_theta: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.p_theta


def supergradient_bound(inst: CmInstance, cert: DualCertificate, p0: float, theta) -> float:
    return p0 + float(np.sum(cert.psi * np.asarray(theta) * inst.group_mass))


def subgradient_check(inst: CmInstance, cert: DualCertificate, perturbations, p0: float | None = None):
    """Re-solve with ``h + theta`` and pair each value with the linear bound through ``cert``."""
    if p0 is None:
        p0 = solve_primal(inst).value
    out = []
    for theta in perturbations:
        theta = np.asarray(theta, dtype=float)
        res = solve_primal(inst, theta=theta)
        out.append(SupergradientRow(theta, res.value, supergradient_bound(inst, cert, p0, theta)))
    return out


def directional_slope(inst: CmInstance, direction, step: float = 1e-4, p0: float | None = None) -> float:
    """Forward difference ``(p(step * d) - p(0)) / step`` of the perturbation function."""
    if p0 is None:
        p0 = solve_primal(inst).value
    return (solve_primal(inst, theta=step * np.asarray(direction, dtype=float)).value - p0) / step


# continuous dual approach for indicator-type objectives


def distance_to_intervals(v, intervals) -> np.ndarray:
    """Distance from each point to a union of closed intervals ``[(lo, hi), ...]``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    d = np.full(v.shape, np.inf)
    for lo, hi in intervals:
        d = np.minimum(d, np.maximum(0.0, np.maximum(lo - v, v - hi)))
    return d


def continuous_dual_path(inst: CmInstance, intervals, slopes: Sequence[float]) -> list[float]:
    """Dual values at ``psi_r = min(1, r * dist(v, C)) / 2``, ``lam = 0``, for each slope ``r``.

    Meant for the two-point template with ``g = -1`` off ``C``; the certificates
    are continuous in ``v`` for every finite ``r``.
    """
    dist = distance_to_intervals(inst.first.group_v[:, 0], intervals)
    return [eval_dual_ip(inst, DualCertificate(0.0, np.minimum(1.0, r * dist) / 2.0)) for r in slopes]


def objective(inst: CmInstance, gamma: Coupling) -> float:
    return expectation(gamma, inst.f)


def budget(inst: CmInstance, gamma: Coupling) -> float:
    return transport_cost(gamma, inst.cost)
