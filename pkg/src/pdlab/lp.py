"""Dense bounded-variable revised simplex.

Solves ``min c.x  s.t.  A x = b,  lower <= x <= upper`` where bounds may be
infinite. Free variables are carried with bounds ``(-inf, inf)`` rather than
split, so equality-row duals come back directly interpretable.

Pricing is Dantzig (largest reduced cost) until a run of degenerate pivots
trips a counter, after which Bland's smallest-index rule is used until the
next nondegenerate step.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
DEGENERATE_RUN = 30
REFACTOR_EVERY = 60
MAX_VARIABLES = 5000


class LpError(Exception):
    """Base class for solver errors."""


class DimensionError(LpError, ValueError):
    """Problem data has inconsistent shapes or invalid bounds."""


class SolverBreakdown(LpError):
    """Numerical failure; the solver refuses to report a wrong optimum."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LpProblem:
    """``min c.x`` subject to ``A x = b`` and per-variable bounds."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = c.shape[0]
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        if A.ndim != 2 or A.shape[1] != n:
            raise DimensionError(f"A has shape {A.shape}, expected (m, {n})")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        lo = np.zeros(n) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,))
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,))
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise DimensionError("NaN bound")
        if np.any(lo > hi):
            raise DimensionError("lower bound exceeds upper bound")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise DimensionError("bound at the wrong infinity")
        for name, arr in (("c", c), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"non-finite entry in {name}")
        if n > MAX_VARIABLES:
            raise DimensionError(f"{n} variables exceeds the dense cap {MAX_VARIABLES}")
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: Status
    value: float
    primal: np.ndarray = field(repr=False)
    duals_eq: np.ndarray = field(repr=False)
    reduced_costs: np.ndarray = field(repr=False)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dual_value(problem: LpProblem, sol: LpSolution) -> float:
    """Dual objective ``b.y`` plus the bound terms picked out by the reduced costs."""
    d = sol.reduced_costs
    total = float(problem.b @ sol.duals_eq)
    pos = d > 0
    neg = d < 0
    with np.errstate(invalid="ignore"):
        total += float(np.sum(d[pos] * problem.lower[pos]))
        total += float(np.sum(d[neg] * problem.upper[neg]))
    return total


def complementarity_residual(problem: LpProblem, sol: LpSolution) -> float:
    """max_j |d_j| times the distance of x_j to the bound its sign selects."""
    x, d = sol.primal, sol.reduced_costs
    res = 0.0
    for j in range(problem.n):
        if d[j] > 0:
            gap = x[j] - problem.lower[j]
        elif d[j] < 0:
            gap = problem.upper[j] - x[j]
        else:
            continue
        res = max(res, abs(d[j]) * gap)
    return res


class _Simplex:
    def __init__(self, problem: LpProblem, feas_tol: float, opt_tol: float):
        self.p = problem
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        m, n = problem.m, problem.n
        self.m, self.n = m, n
        lo, hi = problem.lower, problem.upper

        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        r = problem.b - problem.A @ x
        sgn = np.where(r >= 0, 1.0, -1.0)
        self.A = np.hstack([problem.A, np.diag(sgn)])
        self.lo = np.concatenate([lo, np.zeros(m)])
        self.hi = np.concatenate([hi, np.full(m, np.inf)])
        self.x = np.concatenate([x, np.abs(r)])
        self.basis = list(range(n, n + m))
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[n:] = True
        self.Binv = np.diag(sgn)
        self.iterations = 0
        self.since_refactor = 0
        self.max_iter = 200 * (n + m) + 5000

    # basis bookkeeping

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverBreakdown("singular basis matrix") from exc
        nb = ~self.is_basic
        rhs = self.p.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def _eligible(self, d):
        """Mask of nonbasic columns whose move improves the objective."""
        x, lo, hi = self.x, self.lo, self.hi
        nb = ~self.is_basic
        movable = nb & (hi > lo)
        with np.errstate(invalid="ignore"):
            at_lo = np.isfinite(lo) & (np.abs(x - lo) <= self.feas_tol)
            at_hi = np.isfinite(hi) & (np.abs(x - hi) <= self.feas_tol)
        up = movable & (d < -self.opt_tol) & ~at_hi
        down = movable & (d > self.opt_tol) & ~at_lo
        return up, down

    def run(self, cost: np.ndarray) -> str:
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                raise SolverBreakdown(
                    f"iteration cap {self.max_iter} reached with anti-cycling active"
                )
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            d[self.basis] = 0.0
            up, down = self._eligible(d)
            cand = np.flatnonzero(up | down)
            if cand.size == 0:
                if self.since_refactor == 0:
                    return "optimal"
                # confirm on a fresh factorization before declaring optimality
                self.refactor()
                continue
            bland = degenerate >= DEGENERATE_RUN
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            sigma = 1.0 if up[j] else -1.0

            alpha = self.Binv @ self.A[:, j]
            # basic variables move by -sigma * theta * alpha
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            a = sigma * alpha
            dec = (a > PIVOT_TOL) & np.isfinite(lob)
            inc = (a < -PIVOT_TOL) & np.isfinite(hib)
            steps = np.full(self.m, np.inf)
            with np.errstate(invalid="ignore", divide="ignore"):
                steps[dec] = np.maximum((xb[dec] - lob[dec]) / a[dec], 0.0)
                steps[inc] = np.maximum((hib[inc] - xb[inc]) / -a[inc], 0.0)
            theta = float(steps.min()) if self.m else np.inf
            leave = -1
            leave_to = 0.0
            if np.isfinite(theta):
                ties = np.flatnonzero(steps <= theta + 1e-12)
                if bland:
                    leave = int(ties[np.argmin(np.asarray(self.basis)[ties])])
                else:
                    leave = int(ties[np.argmax(np.abs(a[ties]))])
                theta = float(steps[leave])
                leave_to = lob[leave] if dec[leave] else hib[leave]
            flip = self.hi[j] - self.lo[j]
            if not np.isfinite(theta) and not np.isfinite(flip):
                return "unbounded"
            if flip <= theta:
                # entering variable runs to its opposite bound; basis unchanged
                self.x[j] += sigma * flip
                self.x[self.basis] = xb - sigma * flip * alpha
                self.iterations += 1
                self.since_refactor += 1
                degenerate = 0
                continue
            self.x[j] += sigma * theta
            self.x[self.basis] = xb - sigma * theta * alpha
            out = self.basis[leave]
            self.x[out] = leave_to
            self._pivot(leave, j, alpha)
            degenerate = degenerate + 1 if theta <= 1e-12 else 0

    def _pivot(self, r: int, j: int, alpha: np.ndarray):
        out = self.basis[r]
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.basis[r] = j
        self.is_basic[out] = False
        self.is_basic[j] = True
        self.iterations += 1
        self.since_refactor += 1

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis; fix redundant rows."""
        n = self.n
        for r in range(self.m):
            if self.basis[r] < n:
                continue
            row = self.Binv[r] @ self.A[:, :n]
            cols = [j for j in range(n) if not self.is_basic[j] and abs(row[j]) > 1e-7]
            if not cols:
                continue
            j = max(cols, key=lambda k: abs(row[k]))
            alpha = self.Binv @ self.A[:, j]
            self._pivot(r, j, alpha)
        # artificials may never re-enter; a basic one marks a redundant row
        self.hi[n:] = 0.0
        self.refactor()


def solve_lp(problem: LpProblem, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL) -> LpSolution:
    """Solve ``problem`` with the two-phase bounded revised simplex."""
    sx = _Simplex(problem, feas_tol, opt_tol)
    n, m = problem.n, problem.m
    scale = max(1.0, float(np.max(np.abs(problem.b), initial=0.0)))

    if m > 0:
        phase1 = np.concatenate([np.zeros(n), np.ones(m)])
        sx.run(phase1)
        sx.refactor()
        infeas = float(np.sum(sx.x[n:]))
        if infeas > feas_tol * scale * max(1, m) ** 0.5:
            y = phase1[sx.basis] @ sx.Binv
            return LpSolution(Status.INFEASIBLE, math.nan, sx.x[:n].copy(), -y, np.zeros(n), sx.iterations)
        sx.drive_out_artificials()
    else:
        sx.hi[n:] = 0.0

    cost = np.concatenate([problem.c, np.zeros(m)])
    outcome = sx.run(cost)
    x = sx.x[:n].copy()
    if outcome == "unbounded":
        return LpSolution(Status.UNBOUNDED, -math.inf, x, np.full(m, np.nan), np.full(n, np.nan), sx.iterations)

    sx.refactor()
    x = sx.x[:n].copy()
    lo, hi = problem.lower, problem.upper
    if np.any(x < lo - 10 * feas_tol * scale) or np.any(x > hi + 10 * feas_tol * scale):
        raise SolverBreakdown("basic solution drifted outside its bounds")
    x = np.clip(x, lo, hi)
    y = cost[sx.basis] @ sx.Binv
    d = problem.c - y @ problem.A
    d[[j for j in sx.basis if j < n]] = 0.0
    value = float(problem.c @ x)
    return LpSolution(Status.OPTIMAL, value, x, y, d, sx.iterations)


def enumerate_vertices(problem: LpProblem, feas_tol: float = FEAS_TOL, max_n: int = 12):
    """All basic feasible solutions as ``(vertex, objective value)`` pairs.

    Brute force over column subsets and finite-bound assignments of the
    nonbasic variables; only meant as an oracle for small problems.
    """
    n = problem.n
    if n > max_n:
        raise DimensionError(f"vertex enumeration guarded at n <= {max_n}, got {n}")
    A, b = np.asarray(problem.A), np.asarray(problem.b)
    lo, hi = problem.lower, problem.upper
    if A.shape[0]:
        # keep an independent subset of rows; drop consistent redundant ones
        rank = np.linalg.matrix_rank(A)
        keep = []
        for i in range(A.shape[0]):
            if np.linalg.matrix_rank(A[keep + [i]]) > len(keep):
                keep.append(i)
        Ar, br = A[keep], b[keep]
    else:
        rank, Ar, br = 0, A, b
    free = [j for j in range(n) if not np.isfinite(lo[j]) and not np.isfinite(hi[j])]
    out: list[tuple[np.ndarray, float]] = []

    def accept(x):
        if np.any(x < lo - feas_tol) or np.any(x > hi + feas_tol):
            return
        if np.max(np.abs(A @ x - b), initial=0.0) > feas_tol * 10:
            return
        x = np.clip(x, lo, hi)
        for v, _ in out:
            if np.allclose(v, x, atol=1e-9, rtol=0):
                return
        out.append((x, float(problem.c @ x)))

    for basic in itertools.combinations(range(n), rank):
        if any(j not in basic for j in free):
            continue
        B = Ar[:, list(basic)]
        if rank and abs(np.linalg.det(B)) < 1e-12:
            continue
        nonbasic = [j for j in range(n) if j not in basic]
        choices = []
        for j in nonbasic:
            opts = [v for v in (lo[j], hi[j]) if np.isfinite(v)]
            choices.append(sorted(set(opts)))
        for assign in itertools.product(*choices):
            x = np.zeros(n)
            x[nonbasic] = assign
            if rank:
                x[list(basic)] = np.linalg.solve(B, br - Ar[:, nonbasic] @ np.asarray(assign, float))
            accept(x)
    return out
