"""Primal-worst and dual-best values for uncertain convex programs over vertex polytopes.

Each ``f_i(x, z) = xpart_i(x) + x . P_i z + c_i . z + d_i`` is convex in ``x`` and
affine in ``z``, so the worst case over ``Z = conv(vertices)`` is a vertex max.
An optional box on ``x`` is carried as extra z-free constraint functions that
follow the user's ``m`` constraints.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .conjugate import Affine, ConjugateValue, DiagQuadratic, XFunction, conjugate, right_scale, ri_membership
from .lp import LpProblem, Status, solve_lp
from .qcp import QuadConstraints, barrier, find_interior, projected_subgradient

DB_TOL = 1e-9


class RobustError(ValueError):
    pass


@dataclass(frozen=True)
class BiFunction:
    xpart: XFunction
    P: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        c = np.array(self.c, dtype=float).reshape(-1)
        if P.ndim == 1:
            P = P.reshape(self.xpart.dim, -1)
        if P.shape != (self.xpart.dim, c.shape[0]):
            raise RobustError(f"P has shape {P.shape}, expected ({self.xpart.dim}, {c.shape[0]})")
        P.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @property
    def quadratic(self) -> bool:
        return isinstance(self.xpart, DiagQuadratic) and bool(np.any(self.xpart.q > 0))

    @property
    def z_free(self) -> bool:
        return not (np.any(self.P) or np.any(self.c))

    def at(self, z) -> XFunction:
        """``f(., z)`` as an x-function."""
        z = np.asarray(z, dtype=float)
        return self.xpart.shifted(self.P @ z, float(self.c @ z) + self.d)

    def value(self, x, z) -> float:
        return self.at(z).value(x)


@dataclass(frozen=True)
class UncertainProgram:
    functions: tuple
    Z: np.ndarray
    x_bounds: tuple | None = None
    all_functions: tuple = field(init=False, repr=False)

    def __post_init__(self):
        funcs = tuple(self.functions)
        if not funcs:
            raise RobustError("need at least the objective function")
        Z = np.array(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] == 0:
            raise RobustError("Z must have at least one vertex")
        n = funcs[0].xpart.dim
        for i, f in enumerate(funcs):
            if f.xpart.dim != n:
                raise RobustError(f"function {i} has x-dimension {f.xpart.dim}, expected {n}")
            if f.c.shape[0] != Z.shape[1]:
                raise RobustError(f"function {i} has z-dimension {f.c.shape[0]}, Z has {Z.shape[1]}")
        Z.setflags(write=False)
        extra = []
        bounds = None
        if self.x_bounds is not None:
            lo, hi = (np.array(b, dtype=float).reshape(n) for b in self.x_bounds)
            if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise RobustError("x_bounds must be finite with lower <= upper")
            lo.setflags(write=False)
            hi.setflags(write=False)
            bounds = (lo, hi)
            zero_P, zero_c = np.zeros((n, Z.shape[1])), np.zeros(Z.shape[1])
            for k in range(n):
                e = np.zeros(n)
                e[k] = 1.0
                extra.append(BiFunction(Affine(-e, 0.0), zero_P, zero_c, lo[k]))
                extra.append(BiFunction(Affine(e, 0.0), zero_P, zero_c, -hi[k]))
        object.__setattr__(self, "functions", funcs)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "x_bounds", bounds)
        object.__setattr__(self, "all_functions", funcs + tuple(extra))

    @property
    def n(self) -> int:
        return self.functions[0].xpart.dim

    @property
    def m(self) -> int:
        """Number of user constraints (the box is not counted)."""
        return len(self.functions) - 1

    @property
    def m_total(self) -> int:
        return len(self.all_functions) - 1

    @property
    def quadratic(self) -> bool:
        return any(f.quadratic for f in self.functions)

    def worst(self, i: int, x) -> float:
        f = self.all_functions[i]
        return max(f.value(x, z) for z in self.Z)

    def F(self, x) -> np.ndarray:
        return np.array([self.worst(i, x) for i in range(len(self.all_functions))])


@dataclass(frozen=True)
class DbPoint:
    z: tuple
    wstar: np.ndarray
    dstar: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(np.asarray(v, dtype=float) for v in self.z))
        object.__setattr__(self, "dstar", tuple(np.asarray(v, dtype=float) for v in self.dstar))
        object.__setattr__(self, "wstar", np.asarray(self.wstar, dtype=float).reshape(-1))


@dataclass(frozen=True)
class PwResult:
    status: Status
    value: float
    xstar: np.ndarray | None
    rows: list = field(default_factory=list, repr=False)  # (function index, vertex indices) per row
    mu: np.ndarray | None = field(default=None, repr=False)
    method: str = "lp"

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# epigraph rows


def _rows(prog: UncertainProgram, which=None):
    """Distinct vertex rows ``(i, [vertex ids], slope, const)`` with ``f_i(x, z_v) = slope.x + const + xpart curvature``."""
    out = []
    idx = range(len(prog.all_functions)) if which is None else which
    for i in idx:
        f = prog.all_functions[i]
        seen: dict[bytes, int] = {}
        for v, z in enumerate(prog.Z):
            slope = f.xpart.a + f.P @ z
            const = float(f.c @ z) + f.d + f.xpart.d
            key = np.r_[slope, const].tobytes()
            if key in seen:
                out[seen[key]][1].append(v)
                continue
            seen[key] = len(out)
            out.append((i, [v], slope, const))
    return out


def _curv(prog: UncertainProgram, i: int) -> np.ndarray:
    return np.asarray(prog.all_functions[i].xpart.q, dtype=float)


def _row_system(prog, rows, epi_index: int | None):
    """Quadratic constraint data over ``y = (x, t)``; rows of ``epi_index`` subtract ``t``."""
    n = prog.n
    K = len(rows)
    Q = np.zeros((K, n + 1))
    B = np.zeros((K, n + 1))
    e = np.zeros(K)
    for r, (i, _, slope, const) in enumerate(rows):
        Q[r, :n] = _curv(prog, i)
        B[r, :n] = slope
        if i == epi_index:
            B[r, n] = -1.0
        e[r] = const
    return QuadConstraints(Q, B, e)


def _lp_epigraph(prog, rows, epi_index, obj_col=True):
    """LP ``min t`` over ``(x, t, slacks)`` with one row per vertex row."""
    n, K = prog.n, len(rows)
    A = np.zeros((K, n + 1 + K))
    b = np.zeros(K)
    for r, (i, _, slope, const) in enumerate(rows):
        A[r, :n] = slope
        if i == epi_index:
            A[r, n] = -1.0
        A[r, n + 1 + r] = 1.0
        b[r] = -const
    c = np.zeros(n + 1 + K)
    c[n] = 1.0 if obj_col else 0.0
    lower = np.r_[np.full(n + 1, -np.inf), np.zeros(K)]
    return solve_lp(LpProblem(c, A, b, lower))


def _box_center(prog):
    if prog.x_bounds is None:
        return np.zeros(prog.n)
    return 0.5 * (prog.x_bounds[0] + prog.x_bounds[1])


def _strict_point(prog, constraint_rows):
    """Strictly feasible x for the given rows (t excluded), or None."""
    cons = _row_system(prog, constraint_rows, None)
    Qx, Bx = cons.Q[:, :-1], cons.B[:, :-1]
    y, best = find_interior(QuadConstraints(Qx, Bx, cons.e), _box_center(prog))
    return y, best


def primal_worst(prog: UncertainProgram) -> PwResult:
    """``min_x max_z f_0(x, z)`` s.t. ``max_z f_i(x, z) <= 0`` for every constraint."""
    rows = _rows(prog)
    n = prog.n
    if not prog.quadratic:
        sol = _lp_epigraph(prog, rows, 0)
        if sol.status is Status.INFEASIBLE:
            return PwResult(Status.INFEASIBLE, math.inf, None, rows)
        if sol.status is Status.UNBOUNDED:
            return PwResult(Status.UNBOUNDED, -math.inf, None, rows)
        x = sol.primal[:n]
        mu = np.clip(-sol.duals_eq, 0.0, None)
        return PwResult(Status.OPTIMAL, prog.worst(0, x), x, rows, mu, "lp")

    con_rows = [r for r in rows if r[0] != 0]
    x0 = _box_center(prog)
    if con_rows:
        x0, best = _strict_point(prog, con_rows)
        if x0 is None:
            if best > 1e-8:
                return PwResult(Status.INFEASIBLE, math.inf, None, rows)
            return _subgradient_fallback(prog, rows)
    cons = _row_system(prog, rows, 0)
    t0 = prog.worst(0, x0) + 1.0
    res = barrier(np.r_[np.zeros(n), 1.0], cons, np.r_[x0, t0])
    if res.status == "unbounded":
        return PwResult(Status.UNBOUNDED, -math.inf, None, rows, method="barrier")
    x = res.y[:n]
    return PwResult(Status.OPTIMAL, prog.worst(0, x), x, rows, res.mu, "barrier")


def _subgradient_fallback(prog, rows, penalty: float = 1e3) -> PwResult:
    """Exact-penalty projected subgradient when the robust feasible set has no interior."""
    lo, hi = (prog.x_bounds if prog.x_bounds is not None else (None, None))

    def vg(x):
        val = 0.0
        g = np.zeros(prog.n)
        for i in range(len(prog.all_functions)):
            f = prog.all_functions[i]
            vals = [f.value(x, z) for z in prog.Z]
            v = int(np.argmax(vals))
            grad = f.at(prog.Z[v]).grad(x)
            if i == 0:
                val += vals[v]
                g += grad
            elif vals[v] > 0:
                val += penalty * vals[v]
                g += penalty * grad
        return val, g

    x, _ = projected_subgradient(vg, _box_center(prog), lo, hi)
    return PwResult(Status.OPTIMAL, prog.worst(0, x), x, rows, None, "subgradient")


# dual-best


def _hull_member(p, vertices, tol: float = 1e-9) -> bool:
    V = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float).reshape(-1)
    if np.any(np.all(np.abs(V - p) <= tol, axis=1)):
        return True
    nv = V.shape[0]
    A = np.vstack([V.T, np.ones((1, nv))])
    b = np.r_[np.asarray(p, dtype=float).reshape(-1), 1.0]
    return solve_lp(LpProblem(np.zeros(nv), A, b), feas_tol=tol).optimal


def validate_db_point(prog: UncertainProgram, pt: DbPoint, tol: float = DB_TOL) -> None:
    """Raise :class:`RobustError` unless ``pt`` satisfies the feasibility conditions."""
    M = prog.m_total
    if len(pt.z) != M + 1 or len(pt.dstar) != M + 1 or pt.wstar.shape[0] != M:
        raise RobustError(f"DbPoint must carry {M + 1} z and d entries and {M} weights")
    if np.any(pt.wstar < 0):
        raise RobustError("wstar must be nonnegative")
    total = np.sum(pt.dstar, axis=0)
    scale = max(1.0, max(float(np.max(np.abs(d))) for d in pt.dstar))
    if np.max(np.abs(total)) > tol * scale:
        raise RobustError(f"dstar does not sum to zero (residual {np.max(np.abs(total)):.3g})")
    if not _hull_member(pt.z[0], prog.Z, tol):
        raise RobustError("z_0 lies outside Z")
    for i in range(1, M + 1):
        w, z = pt.wstar[i - 1], pt.z[i]
        if w == 0:
            if np.max(np.abs(z)) > tol:
                raise RobustError(f"z_{i} must vanish when wstar_{i} = 0")
        elif not _hull_member(z / w, prog.Z, tol):
            raise RobustError(f"z_{i} lies outside wstar_{i} * Z")


def _h(prog, i, tol):
    f = prog.all_functions[i]
    return lambda z, d: conjugate(f.at(z), d, tol=tol)


def db_terms(prog: UncertainProgram, pt: DbPoint, tol: float = DB_TOL) -> list[ConjugateValue]:
    """Conjugate terms ``h_0(z_0, d_0)`` and ``(h_i w_i)(z_i, d_i)``."""
    terms = [_h(prog, 0, tol)(pt.z[0], pt.dstar[0])]
    for i in range(1, prog.m_total + 1):
        terms.append(right_scale(_h(prog, i, tol), pt.wstar[i - 1], pt.z[i], pt.dstar[i], tol=tol))
    return terms


def db_evaluate(prog: UncertainProgram, pt: DbPoint, tol: float = DB_TOL) -> float:
    """Dual-best objective; ``-inf`` when some conjugate term is infinite."""
    validate_db_point(prog, pt, tol)
    terms = db_terms(prog, pt, tol)
    if not all(t.finite for t in terms):
        return -math.inf
    return 0.0 - float(sum(t.value for t in terms))


def _aggregate(prog: UncertainProgram, rows, mu):
    """Collapse per-row multipliers into weights and weighted z points."""
    M = prog.m_total
    centroid = prog.Z.mean(axis=0)
    w = np.zeros(M + 1)
    z = [np.zeros(prog.Z.shape[1]) for _ in range(M + 1)]
    for (i, verts, _, _), u in zip(rows, mu):
        w[i] += u
        if prog.all_functions[i].z_free:
            z[i] = z[i] + u * centroid
        else:
            z[i] = z[i] + u * prog.Z[verts].mean(axis=0)
    return w, z


def db_point_from_multipliers(prog: UncertainProgram, rows, mu, x) -> DbPoint:
    """Dual-best point built from epigraph multipliers and a stationary ``x``."""
    mu = np.where(np.asarray(mu) > 1e-14, mu, 0.0)
    w, z = _aggregate(prog, rows, mu)
    if w[0] <= 0:
        raise RobustError("objective rows carry no multiplier mass")
    z[0] = z[0] / w[0]
    M = prog.m_total
    d = [None] * (M + 1)
    for i in range(1, M + 1):
        f = prog.all_functions[i]
        d[i] = w[i] * (f.xpart.q * x + f.xpart.a) + f.P @ z[i]
    d[0] = -np.sum(d[1:], axis=0) if M else np.zeros(prog.n)
    return DbPoint(tuple(z), w[1:], tuple(d))


def db_construct_from_kkt(prog: UncertainProgram, pw: PwResult | None = None) -> DbPoint:
    pw = primal_worst(prog) if pw is None else pw
    if not pw.optimal or pw.mu is None:
        raise RobustError(f"primal-worst not solved to optimality with multipliers ({pw.status.value}, {pw.method})")
    return db_point_from_multipliers(prog, pw.rows, pw.mu, pw.xstar)


def _lagrangian_dual_lp(prog, z_tuple):
    """``sup_{u >= 0} inf_x f_0(x, z_0) + sum u_i f_i(x, z_i)`` for affine x-parts."""
    M = prog.m_total
    fs = [prog.all_functions[i].at(z_tuple[i]) for i in range(M + 1)]
    # max sum u_i d_i  s.t.  sum u_i a_i = -a_0,  u >= 0
    A = np.array([f.a for f in fs[1:]]).T.reshape(prog.n, M)
    c = -np.array([f.d for f in fs[1:]])
    sol = solve_lp(LpProblem(c, A, -fs[0].a))
    if sol.status is Status.INFEASIBLE:
        return -math.inf
    if sol.status is Status.UNBOUNDED:
        return math.inf
    return fs[0].d - sol.value


def _dual_function_quadratic(fs, u) -> float:
    """``inf_x`` of a separable quadratic Lagrangian in closed form."""
    q = fs[0].q + sum(ui * f.q for ui, f in zip(u, fs[1:]))
    a = fs[0].a + sum(ui * f.a for ui, f in zip(u, fs[1:]))
    d = fs[0].d + sum(ui * f.d for ui, f in zip(u, fs[1:]))
    flat = q <= 0
    if np.any(np.abs(a[flat]) > 1e-12):
        return -math.inf
    pos = ~flat
    return float(d - np.sum(a[pos] ** 2 / (2 * q[pos])))


def nonconvex_db_evaluate(prog: UncertainProgram, z_tuple) -> float:
    """Lagrangian dual of the program with ``z`` frozen at ``z_tuple`` (one point per function)."""
    M = prog.m_total
    zt = [np.asarray(z, dtype=float) for z in z_tuple]
    if len(zt) == prog.m + 1 and M > prog.m:
        # box functions ignore z
        zt += [prog.Z[0]] * (M - prog.m)
    if len(zt) != M + 1:
        raise RobustError(f"need {M + 1} z points, got {len(zt)}")
    for i, z in enumerate(zt):
        if not _hull_member(z, prog.Z):
            raise RobustError(f"z_{i} lies outside Z")
    if not prog.quadratic:
        return _lagrangian_dual_lp(prog, zt)
    fixed = UncertainProgram(
        [BiFunction(f.at(z), np.zeros((prog.n, 1)), [0.0], 0.0) for f, z in zip(prog.all_functions, zt)],
        [[0.0]],
    )
    pw = primal_worst(fixed)
    if pw.status is Status.INFEASIBLE:
        return math.inf
    if not pw.optimal:
        return -math.inf
    fs = [prog.all_functions[i].at(zt[i]) for i in range(M + 1)]
    if pw.mu is None:
        return -math.inf
    u = np.zeros(M)
    for (i, _, _, _), val in zip(pw.rows, pw.mu):
        if i > 0:
            u[i - 1] += val
    return _dual_function_quadratic([_as_quad(f) for f in fs], u)


def _as_quad(f: XFunction) -> DiagQuadratic:
    return f if isinstance(f, DiagQuadratic) else DiagQuadratic(np.zeros(f.dim), f.a, f.d)


def vertex_tuples(prog: UncertainProgram):
    """All assignments of a vertex to each z-dependent user function."""
    nv = prog.Z.shape[0]
    dep = [i for i in range(prog.m + 1) if not prog.functions[i].z_free]
    for choice in itertools.product(range(nv), repeat=len(dep)):
        zt = [prog.Z[0]] * (prog.m + 1)
        for i, v in zip(dep, choice):
            zt[i] = prog.Z[v]
        yield zt


# condition checks


@dataclass(frozen=True)
class SlaterReport:
    holds: bool
    value: float
    witness: np.ndarray | None


def check_prop41_i(prog: UncertainProgram, tol: float = 1e-9) -> SlaterReport:
    """Whether some ``x`` (in the box, if any) makes every worst-case constraint strictly negative."""
    user = list(range(1, prog.m + 1))
    box = list(range(prog.m + 1, prog.m_total + 1))
    if not user:
        return SlaterReport(True, -math.inf, _box_center(prog))
    rows = _rows(prog, user)
    hard = _rows(prog, box)
    n = prog.n
    if not any(prog.functions[i].quadratic for i in user):
        # min s over (x, s, slacks): rows f - s + slack = 0, box rows hard; s >= -1 keeps it bounded
        K, H = len(rows), len(hard)
        A = np.zeros((K + H, n + 1 + K + H))
        b = np.zeros(K + H)
        for r, (_, _, slope, const) in enumerate(rows + hard):
            A[r, :n] = slope
            if r < K:
                A[r, n] = -1.0
            A[r, n + 1 + r] = 1.0
            b[r] = -const
        c = np.zeros(A.shape[1])
        c[n] = 1.0
        lower = np.r_[np.full(n, -np.inf), -1.0, np.zeros(K + H)]
        sol = solve_lp(LpProblem(c, A, b, lower))
        if not sol.optimal:
            return SlaterReport(False, math.inf, None)
        x = sol.primal[:n]
    else:
        x0 = _box_center(prog)
        cons = _row_system(prog, rows, 1)  # every user row subtracts s; index 1 is a placeholder
        cons = QuadConstraints(cons.Q, np.where(np.arange(n + 1)[None, :] == n, -1.0, cons.B), cons.e)
        floor = QuadConstraints(np.zeros((1, n + 1)), np.r_[np.zeros(n), -1.0][None, :], np.array([-1.0]))
        allc = cons.stack(floor)
        if hard:
            hc = _row_system(prog, hard, None)
            allc = allc.stack(hc)
        s0 = max(float(np.max(cons.values(np.r_[x0, 0.0]))), -1.0) + 1.0
        res = barrier(np.r_[np.zeros(n), 1.0], allc, np.r_[x0, s0], stop=lambda y: y[-1] < -2 * tol - 1e-6)
        x = res.y[:n]
    val = max(prog.worst(i, x) for i in user)
    return SlaterReport(val < -tol, val, x)


def check_prop41_ii(prog: UncertainProgram, tol: float = 1e-9) -> bool:
    """Robust feasible region nonempty and bounded."""
    rows = _rows(prog, range(1, prog.m_total + 1))
    n = prog.n
    if not prog.quadratic:
        K = len(rows)
        A = np.zeros((K, n + K))
        b = np.zeros(K)
        for r, (_, _, slope, const) in enumerate(rows):
            A[r, :n] = slope
            A[r, n + r] = 1.0
            b[r] = -const
        lower = np.r_[np.full(n, -np.inf), np.zeros(K)]
        if not solve_lp(LpProblem(np.zeros(n + K), A, b, lower)).optimal:
            return False
        if prog.x_bounds is not None:
            return True
        for k in range(n):
            for sgn in (1.0, -1.0):
                c = np.zeros(n + K)
                c[k] = sgn
                if solve_lp(LpProblem(c, A, b, lower)).status is Status.UNBOUNDED:
                    return False
        return True
    if not rows:
        return prog.x_bounds is not None
    x, best = _strict_point(prog, rows)
    if x is None:
        return best <= tol and prog.x_bounds is not None
    if prog.x_bounds is not None:
        return True
    cons = _row_system(prog, rows, None)
    cx = QuadConstraints(cons.Q[:, :-1], cons.B[:, :-1], cons.e)
    for k in range(n):
        for sgn in (1.0, -1.0):
            c = np.zeros(n)
            c[k] = sgn
            if barrier(c, cx, x).status == "unbounded":
                return False
    return True


def check_prop42(prog: UncertainProgram, pt: DbPoint, delta: float = 1e-9, tol: float = 1e-9) -> bool:
    """Positive constraint weights, ``z_i / w_i`` in ri(Z), and finite conjugates at ``pt``.

    Box rows are part of ``X`` and are not subject to the weight condition.
    Within the supported families the conjugate domains are affine sets or the
    whole space, so finiteness already puts the point in their relative interior.
    """
    try:
        validate_db_point(prog, pt)
    except RobustError:
        return False
    user_w = pt.wstar[: prog.m]
    if np.any(user_w <= tol):
        return False
    if not ri_membership(pt.z[0], 1.0, prog.Z, delta):
        return False
    for i in range(1, prog.m + 1):
        if not prog.functions[i].z_free and not ri_membership(pt.z[i], pt.wstar[i - 1], prog.Z, delta):
            return False
    return all(t.finite for t in db_terms(prog, pt))


# sampling


def random_db_point(prog: UncertainProgram, rng: np.random.Generator, finite: bool = True) -> DbPoint:
    """Random feasible dual-best point.

    With ``finite`` the point is built from a random dual-feasible multiplier
    vector (affine programs) or a random common ``x`` (quadratic programs), so
    the objective is finite; otherwise ``dstar`` is random.
    """
    rows = _rows(prog)
    K = len(rows)
    n = prog.n
    obj = [r for r, row in enumerate(rows) if row[0] == 0]
    if finite and not prog.quadratic:
        # dual-feasible mu: stationarity sum mu_r slope_r = 0, objective weights sum to 1, mu <= 10
        A = np.zeros((n + 1, K))
        for r, (_, _, slope, _) in enumerate(rows):
            A[:n, r] = slope
        A[n, obj] = 1.0
        b = np.r_[np.zeros(n), 1.0]
        sol = solve_lp(LpProblem(rng.normal(size=K), A, b, np.zeros(K), np.full(K, 10.0)))
        if sol.optimal:
            return db_point_from_multipliers(prog, rows, sol.primal, np.zeros(n))
    mu = rng.exponential(size=K) * (rng.random(K) < 0.7)
    mu[obj] = rng.dirichlet(np.ones(len(obj)))
    if finite:
        lo, hi = prog.x_bounds if prog.x_bounds is not None else (-np.ones(n), np.ones(n))
        return db_point_from_multipliers(prog, rows, mu, rng.uniform(lo, hi))
    w, z = _aggregate(prog, rows, mu)
    d = [rng.normal(size=n) for _ in range(prog.m_total)]
    d = [-np.sum(d, axis=0) if d else np.zeros(n)] + d
    return DbPoint(tuple(z), w[1:], tuple(d))
