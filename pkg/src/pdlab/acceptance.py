"""Finite-scale acceptance checks, shared by the ``suite`` command and the test suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cm_wasserstein as cm
from . import instances as inst
from . import robust as rb
from .lp import LpProblem, complementarity_residual, enumerate_vertices, solve_lp
from .measures import Coupling, ProductGrid, conditional_residual, mix, tv_distance


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    limit: float
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        why = f" [{'; '.join(self.failures)}]" if self.failures else ""
        return f"{tag} {self.name:<12} {self.seconds:6.2f}s/{self.limit:g}s  {shown}{why}"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "seconds": self.seconds,
            "limit": self.limit,
            "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
            "failures": list(self.failures),
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


class _Recorder:
    def __init__(self):
        self.metrics: dict = {}
        self.failures: list = []

    def require(self, ok: bool, message: str):
        if not ok:
            self.failures.append(message)
        return ok


def _run(name: str, limit: float, body: Callable[[_Recorder], None]) -> CheckResult:
    rec = _Recorder()
    t0 = time.perf_counter()
    body(rec)
    dt = time.perf_counter() - t0
    rec.require(dt < limit, f"runtime {dt:.2f}s exceeds {limit}s")
    return CheckResult(name, not rec.failures, dt, limit, rec.metrics, rec.failures)


# individual criteria


def check_lemma34(seed: int = 0) -> CheckResult:
    def body(r):
        x = inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)
        res = cm.solve_primal(x)
        psi_err = float(np.max(np.abs(res.cert.psi - np.array([1.0, 0.5]))))
        r.metrics.update(primal=res.value, dual=res.cert.value, psi_err=psi_err)
        r.require(abs(res.value + 0.75) <= 1e-8, f"primal {res.value}")
        r.require(abs(res.cert.value + 0.75) <= 1e-8, f"dual {res.cert.value}")
        r.require(psi_err <= 1e-6, f"psi error {psi_err:.3g}")

    return _run("lemma34", 1.0, body)


def inner_grid(n: int = 1000, top: float = 1.0) -> ProductGrid:
    return ProductGrid([[0.0]], np.arange(n + 1) / n * top)


def check_example32(seed: int = 0, eps: float = 0.5) -> CheckResult:
    def body(r):
        norms = []
        for n in (4, 8, 16, 32):
            x = inst.example32(eps, n)
            res = cm.solve_primal(x)
            mn = cm.min_norm_certificate(x, res.value)
            norm = float(np.max(np.abs(mn.psi)))
            norms.append(norm)
            r.require(abs(res.value) <= 1e-9, f"n={n} primal {res.value}")
            r.require(abs(norm - n) <= 1e-6, f"n={n} min-norm psi {norm}")
        base = inst.example32(eps, 4)
        fine = inner_grid(1000)
        lo = math.inf
        for lam in np.linspace(0.0, 10.0, 50):
            for psi in np.linspace(-10.0, 10.0, 50):
                lo = min(lo, cm.eval_dual_ip(base, cm.DualCertificate(lam, [psi]), fine))
        r.metrics.update(psi_norms=norms, box_min_dual=lo)
        r.require(lo >= 0.95, f"bounded-certificate dual dips to {lo}")

    return _run("example32", 30.0, body)


def check_example32mod(seed: int = 0, eps: float = 0.5) -> CheckResult:
    def body(r):
        norms, primals = [], []
        for n in (4, 8, 16, 32, 64):
            x = inst.example32(eps, n, extend=True)
            rep = cm.check_assumptions(x)
            r.require(rep.a1_holds and rep.a2_holds, f"n={n} slack conditions fail")
            res = cm.solve_primal(x)
            mn = cm.min_norm_certificate(x, res.value)
            norms.append(float(np.max(np.abs(mn.psi))))
            primals.append(res.value)
        ratio = max(norms) / min(norms)
        r.metrics.update(psi_norms=norms, ratio=ratio, primal_64=primals[-1])
        r.require(ratio <= 2.0, f"psi norm ratio {ratio:.3g}")
        r.require(abs(primals[-1] - 1.0) <= 1e-2, f"primal at n=64 is {primals[-1]:.6f}, not within 1e-2 of 1")

    return _run("example32mod", 30.0, body)


def check_example35(seed: int = 0) -> CheckResult:
    def body(r):
        errs = []
        for n in (16, 64, 256):
            x = inst.example35(n)
            v = np.arange(1, n + 1) / n
            g = -1.0 / np.sqrt(v)
            res = cm.solve_primal(x)
            want = g.mean() / 2
            psi_err = float(np.max(np.abs(res.cert.psi + g / 2)))
            norm = float(np.max(np.abs(res.cert.psi)))
            errs.append(psi_err)
            r.require(abs(res.value - want) <= 1e-8, f"n={n} primal {res.value} vs {want}")
            r.require(abs(res.cert.value - want) <= 1e-8, f"n={n} dual {res.cert.value} vs {want}")
            r.require(psi_err <= 1e-6, f"n={n} psi error {psi_err:.3g}")
            r.require(abs(norm - math.sqrt(n) / 2) <= 1e-6, f"n={n} psi norm {norm}")
        r.metrics.update(psi_err=max(errs))

    return _run("example35", 10.0, body)


def check_repair(seed: int = 0, count: int = 50) -> CheckResult:
    def body(r):
        worst_budget = worst_res = worst_obj = worst_cres = 0.0
        worst_ratio = 0.0
        done = 0
        for k in range(count):
            rng = np.random.default_rng(seed * 1000 + k)
            x = inst.random_cm(seed * 1000 + k)
            rep = cm.check_assumptions(x)
            if not (rep.a1_holds and rep.a2_holds):
                r.require(False, f"instance {k} fails the slack conditions")
                continue
            eps = float(rng.uniform(0.05, 1.0))
            g_eps = cm.solve_primal(x, rho=x.rho + eps).coupling
            out = cm.lemma32_repair(g_eps, rep.gamma0, eps, rep.a_value)
            t = eps / (rep.a_value + eps)
            worst_budget = max(worst_budget, cm.budget(x, out) - x.rho)
            worst_res = max(worst_res, conditional_residual(out, x.h).sup())
            floor = (1 - t) * cm.objective(x, g_eps) + t * cm.objective(x, rep.gamma0)
            worst_obj = max(worst_obj, floor - cm.objective(x, out))

            # knock the optimum off the moment constraints, then repair
            finite = np.isfinite(x.cost)
            noise = rng.random(x.cost.shape) * finite
            noise = noise / noise.sum(axis=1, keepdims=True) * x.first.mass[:, None]
            bent = mix(g_eps, Coupling(x.first, x.grid, noise), float(rng.uniform(0.05, 0.5)))
            fixed = cm.conditional_repair(bent, rep.gamma_plus, rep.gamma_minus, x.h)
            worst_cres = max(worst_cres, conditional_residual(fixed, x.h).sup())
            bound = cm.tv_repair_bound(bent, x.h, rep.b_value)
            tv = tv_distance(bent, fixed)
            if bound > 0:
                worst_ratio = max(worst_ratio, tv / bound)
            elif tv > 0:
                worst_ratio = math.inf
            done += 1
        r.metrics.update(
            instances=done, budget_excess=worst_budget, residual=worst_res,
            objective_shortfall=worst_obj, repaired_residual=worst_cres, tv_ratio=worst_ratio,
        )
        r.require(worst_budget <= 1e-10, f"repaired budget exceeds rho by {worst_budget:.3g}")
        r.require(worst_res <= 1e-10, f"repaired residual {worst_res:.3g}")
        r.require(worst_obj <= 1e-10, f"objective mixture bound missed by {worst_obj:.3g}")
        r.require(worst_cres <= 1e-12, f"conditional repair leaves residual {worst_cres:.3g}")
        r.require(worst_ratio <= 1.0, f"TV ratio {worst_ratio:.3g}")

    return _run("repair", 20.0, body)


def check_ip_identity(seed: int = 0, count: int = 200, certs: int = 20) -> CheckResult:
    def body(r):
        worst_id = worst_wd = 0.0
        for k in range(count):
            rng = np.random.default_rng(seed * 7919 + k)
            x = inst.random_cm(seed * 7919 + k)
            res = cm.solve_primal(x)
            worst_id = max(worst_id, abs(cm.eval_dual_ip(x, res.cert) - res.value))
            for _ in range(certs):
                c = cm.DualCertificate(rng.uniform(0, 5), rng.normal(scale=2.0, size=x.first.n_groups))
                worst_wd = max(worst_wd, res.value - cm.eval_dual_ip(x, c))
        r.metrics.update(identity_err=worst_id, weak_violation=worst_wd)
        r.require(worst_id <= 1e-8, f"IP identity error {worst_id:.3g}")
        r.require(worst_wd <= 1e-9, f"weak duality violated by {worst_wd:.3g}")

    return _run("ip_identity", 60.0, body)


def check_stability(seed: int = 0, count: int = 20, thetas: int = 100) -> CheckResult:
    def body(r):
        cases = [inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)]
        cases += [inst.random_cm(seed * 104729 + k) for k in range(count)]
        worst_ineq = worst_slope = 0.0
        for k, x in enumerate(cases):
            rng = np.random.default_rng(seed * 31 + k)
            res = cm.solve_primal(x)
            G = x.first.n_groups
            perts = [rng.uniform(-0.1, 0.1, size=G) for _ in range(thetas)]
            rows = cm.subgradient_check(x, res.cert, perts, res.value)
            worst_ineq = max(worst_ineq, max(row.p_theta - row.bound for row in rows))
            psi = np.asarray(res.cert.psi)
            d = psi / np.max(np.abs(psi)) if np.any(psi) else np.ones(G)
            slope = cm.directional_slope(x, d, 1e-4, res.value)
            want = float(np.sum(psi * d * x.group_mass))
            worst_slope = max(worst_slope, abs(slope - want))
        r.metrics.update(instances=len(cases), ineq_violation=worst_ineq, slope_err=worst_slope)
        r.require(worst_ineq <= 1e-9, f"supergradient inequality violated by {worst_ineq:.3g}")
        r.require(worst_slope <= 1e-3, f"directional slope off by {worst_slope:.3g}")

    return _run("stability", 60.0, body)


def check_pwdb(seed: int = 0, lps: int = 20, qps: int = 10, points: int = 100) -> CheckResult:
    def body(r):
        gap = weak = collapse = 0.0
        slater_fail = 0
        programs = [inst.random_pw(seed * 997 + k) for k in range(lps)]
        programs += [inst.random_pw(seed * 997 + 500 + k, quadratic=True, m=2, n_vertices=3) for k in range(qps)]
        for k, p in enumerate(programs):
            if not rb.check_prop41_i(p).holds:
                slater_fail += 1
            pw = rb.primal_worst(p)
            pt = rb.db_construct_from_kkt(p, pw)
            gap = max(gap, abs(rb.db_evaluate(p, pt) - pw.value))
            rng = np.random.default_rng(seed * 13 + k)
            for j in range(points):
                q = rb.random_db_point(p, rng, finite=j % 4 != 0)
                weak = max(weak, rb.db_evaluate(p, q) - pw.value)
            for zt in rb.vertex_tuples(p):
                weak = max(weak, rb.nonconvex_db_evaluate(p, zt) - pw.value)
        for k in range(6):
            p = inst.random_pw(seed * 997 + 900 + k, quadratic=k % 2 == 1, n_vertices=1)
            pw = rb.primal_worst(p)
            lag = rb.nonconvex_db_evaluate(p, [p.Z[0]] * (p.m + 1))
            db = rb.db_evaluate(p, rb.db_construct_from_kkt(p, pw))
            collapse = max(collapse, abs(pw.value - lag), abs(db - lag))
        r.metrics.update(programs=len(programs), gap=gap, weak_violation=weak, singleton_err=collapse)
        r.require(slater_fail == 0, f"{slater_fail} programs fail the Slater check")
        r.require(gap <= 1e-6, f"|DB - PW| reaches {gap:.3g}")
        r.require(weak <= 1e-9, f"weak duality violated by {weak:.3g}")
        r.require(collapse <= 1e-8, f"singleton collapse error {collapse:.3g}")

    return _run("pwdb", 60.0, body)


def random_bounded_lp(rng: np.random.Generator) -> LpProblem:
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, min(n, 4) + 1))
    A = rng.normal(size=(m, n))
    upper = rng.uniform(0.5, 3.0, size=n)
    x0 = rng.uniform(0, 1, size=n) * upper
    return LpProblem(rng.normal(size=n), A, A @ x0, np.zeros(n), upper)


def check_lp_core(seed: int = 0, count: int = 50) -> CheckResult:
    def body(r):
        rng = np.random.default_rng(seed)
        worst_val = worst_cs = 0.0
        for _ in range(count):
            p = random_bounded_lp(rng)
            sol = solve_lp(p)
            best = min(v for _, v in enumerate_vertices(p))
            worst_val = max(worst_val, abs(sol.value - best))
            worst_cs = max(worst_cs, complementarity_residual(p, sol))
        r.metrics.update(value_err=worst_val, cs_residual=worst_cs)
        r.require(worst_val <= 1e-8, f"value mismatch {worst_val:.3g}")
        r.require(worst_cs <= 1e-8, f"complementary slackness residual {worst_cs:.3g}")

    return _run("lp_core", 10.0, body)


def check_example33(seed: int = 0) -> CheckResult:
    def body(r):
        vals = []
        for R in (10.0, 100.0, 1000.0):
            vals.append(cm.solve_primal(inst.example33(R, 200)).value)
            r.require(vals[-1] < 0, f"R={R} value {vals[-1]} not negative")
            r.require(abs(vals[-1]) <= 2 / (1 + R), f"R={R} |value| exceeds 2/(1+R)")
        r.require(vals[0] < vals[1] < vals[2], "values do not increase with R")
        r.metrics.update(values=vals)

    return _run("example33", 10.0, body)


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "lemma34": check_lemma34,
    "example32": check_example32,
    "example32mod": check_example32mod,
    "example35": check_example35,
    "repair": check_repair,
    "ip_identity": check_ip_identity,
    "stability": check_stability,
    "pwdb": check_pwdb,
    "lp_core": check_lp_core,
    "example33": check_example33,
}


def run_suite(only=None, seed: int = 0) -> list[CheckResult]:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    return [CHECKS[n](seed=seed) for n in names]
