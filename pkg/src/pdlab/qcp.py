"""Log-barrier Newton solver for linear objectives under separable convex quadratic constraints.

Constraint ``k`` is ``g_k(y) = 0.5 * sum_j Q[k, j] y_j^2 + B[k] . y + e[k] <= 0`` with
``Q >= 0``. Multipliers are read off the central path as ``1 / (tau * -g_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAP_TOL = 1e-9
DIVERGE = 1e8
MAX_NEWTON = 200


class QcpError(RuntimeError):
    pass


@dataclass(frozen=True)
class QcpResult:
    status: str  # "optimal", "infeasible", "unbounded", "no_interior"
    y: np.ndarray
    mu: np.ndarray
    value: float
    newton_steps: int = 0


@dataclass(frozen=True)
class QuadConstraints:
    Q: np.ndarray
    B: np.ndarray
    e: np.ndarray

    def values(self, y) -> np.ndarray:
        return 0.5 * self.Q @ (y * y) + self.B @ y + self.e

    def jac(self, y) -> np.ndarray:
        return self.Q * y[None, :] + self.B

    def extend(self, cols: int) -> "QuadConstraints":
        """Append ``cols`` variables that do not enter any constraint."""
        z = np.zeros((self.Q.shape[0], cols))
        return QuadConstraints(np.hstack([self.Q, z]), np.hstack([self.B, z]), self.e)

    def stack(self, other: "QuadConstraints") -> "QuadConstraints":
        return QuadConstraints(
            np.vstack([self.Q, other.Q]), np.vstack([self.B, other.B]), np.concatenate([self.e, other.e])
        )


def _center(c, cons: QuadConstraints, y, tau):
    """Damped Newton on ``tau c.y - sum log(-g)``.

    Returns ``(point, steps, diverged, centered)``.
    """

    steps = 0
    for steps in range(1, MAX_NEWTON + 1):
        g = cons.values(y)
        J = cons.jac(y)
        inv = 1.0 / (-g)
        grad = tau * c + J.T @ inv
        H = (J * (inv * inv)[:, None]).T @ J + np.diag(cons.Q.T @ inv)
        H += 1e-12 * max(1.0, float(np.max(np.abs(np.diag(H))))) * np.eye(y.size)
        try:
            dy = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            dy = -np.linalg.lstsq(H, grad, rcond=None)[0]
        dec = -(grad @ dy)
        if dec / 2 <= 1e-11:
            return y, steps, False, True
        # damped Newton step for a self-concordant barrier; halve only as a round-off guard
        s = 1.0 if dec < 0.25 else 1.0 / (1.0 + math.sqrt(dec))
        while np.any(cons.values(y + s * dy) >= 0) and s > 1e-16:
            s *= 0.5
        if s <= 1e-16:
            break
        y = y + s * dy
        if np.max(np.abs(y)) > DIVERGE:
            return y, steps, True, False
    return y, steps, False, False


def barrier(c, cons: QuadConstraints, y0, gap_tol: float = GAP_TOL, tau0: float = 1.0, stop=None,
            polish_kkt: bool = True) -> QcpResult:
    """Path-following from a strictly feasible ``y0``; ``stop(y)`` may end the run early."""
    c = np.asarray(c, dtype=float)
    y = np.array(y0, dtype=float)
    if np.any(cons.values(y) >= 0):
        raise QcpError("starting point is not strictly feasible")
    K = cons.e.shape[0]
    tau = tau0
    total = 0
    while True:
        y_new, k, diverged, centered = _center(c, cons, y, tau)
        total += k
        if diverged:
            return QcpResult("unbounded", y_new, np.zeros(K), -math.inf, total)
        if not centered and tau > tau0:
            # round-off wall: keep the last centered point
            tau /= 10.0
            break
        y = y_new
        if stop is not None and stop(y):
            break
        if K / tau < gap_tol:
            break
        tau *= 10.0
    mu = 1.0 / (tau * -cons.values(y))
    if polish_kkt:
        y, mu = polish(c, cons, y, mu)
    return QcpResult("optimal", y, mu, float(c @ y), total)


def polish(c, cons: QuadConstraints, y, mu, iters: int = 30):
    """Newton on the KKT equations of the constraints the barrier marks active.

    Returns the input unchanged unless the refined point is feasible, has
    nonnegative multipliers and a smaller KKT residual.
    """
    g = cons.values(y)
    act = np.flatnonzero(mu * np.maximum(1.0, np.abs(g)) > 1e-6 * max(1.0, float(np.max(mu))))
    n, a = y.size, act.size
    if a == 0 or a > n:
        return y, mu

    def residual(yy, ma):
        J = cons.jac(yy)[act]
        return np.r_[c + J.T @ ma, cons.values(yy)[act]]

    def kkt_error(yy, full_mu):
        gg = cons.values(yy)
        stat = c + cons.jac(yy).T @ full_mu
        return max(float(np.max(np.abs(stat))), float(np.max(np.abs(full_mu * gg))), float(np.max(gg, initial=0.0)))

    yy, ma = y.copy(), mu[act].copy()
    for _ in range(iters):
        r = residual(yy, ma)
        if np.max(np.abs(r)) <= 1e-15:
            break
        J = cons.jac(yy)[act]
        H = np.diag(cons.Q[act].T @ ma)
        M = np.block([[H, J.T], [J, np.zeros((a, a))]])
        try:
            step = np.linalg.solve(M, -r)
        except np.linalg.LinAlgError:
            return y, mu
        yy = yy + step[:n]
        ma = ma + step[n:]
    full = np.zeros_like(mu)
    full[act] = ma
    gg = cons.values(yy)
    if np.any(ma < 0) or np.any(gg > 1e-12) or not np.all(np.isfinite(yy)):
        return y, mu
    if kkt_error(yy, full) >= kkt_error(y, mu):
        return y, mu
    return yy, full


def find_interior(cons: QuadConstraints, y0, margin: float = 0.0):
    """Strictly feasible point via ``min s`` s.t. ``g_k(y) <= s``, ``s >= -1``.

    Returns ``(point or None, phase-one optimum)``.
    """
    y0 = np.asarray(y0, dtype=float)
    g0 = cons.values(y0)
    if np.all(g0 < -margin):
        return y0, float(np.max(g0, initial=-1.0))
    K, n = cons.Q.shape
    ext = QuadConstraints(
        np.vstack([np.hstack([cons.Q, np.zeros((K, 1))]), np.zeros((1, n + 1))]),
        np.vstack([np.hstack([cons.B, -np.ones((K, 1))]), np.r_[np.zeros(n), -1.0][None, :]]),
        np.r_[cons.e, -1.0],
    )
    start = np.r_[y0, max(float(np.max(g0)), -1.0) + 1.0]
    c = np.r_[np.zeros(n), 1.0]
    res = barrier(c, ext, start, stop=lambda u: u[-1] < -margin - 1e-12, polish_kkt=False)
    y = res.y[:n]
    best = float(np.max(cons.values(y)))
    if best < -margin:
        return y, best
    return None, best


def projected_subgradient(value_and_subgrad, x0, lower=None, upper=None, iters: int = 10_000, tol: float = 1e-6):
    """Minimize a max-of-smooth function with step ``1/k``; returns the best iterate.

    Stops early once the best value has not improved by more than ``tol`` over
    ``iters // 10`` consecutive steps.
    """
    x = np.array(x0, dtype=float)
    best_x, best_v = x.copy(), value_and_subgrad(x)[0]
    stale = 0
    for k in range(1, iters + 1):
        v, g = value_and_subgrad(x)
        if v < best_v - tol:
            stale = 0
        else:
            stale += 1
        if v < best_v:
            best_x, best_v = x.copy(), v
        if stale > iters // 10:
            break
        nrm = np.linalg.norm(g)
        if nrm == 0:
            break
        x = x - g / (k * nrm)
        if lower is not None:
            x = np.maximum(x, lower)
        if upper is not None:
            x = np.minimum(x, upper)
    return best_x, best_v
