"""Closed-form conjugates for affine and separable quadratic functions of x."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lp import LpProblem, solve_lp

ZERO_TOL = 1e-12


class ConjugateError(ValueError):
    pass


def _vec(a, name):
    a = np.array(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ConjugateError(f"{name} must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Affine:
    """``a . x + d``."""

    a: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "d", float(self.d))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def q(self) -> np.ndarray:
        return np.zeros(self.dim)

    def value(self, x) -> float:
        return float(self.a @ np.asarray(x, dtype=float) + self.d)

    def grad(self, x) -> np.ndarray:
        return self.a.copy()

    def shifted(self, da, dd: float = 0.0) -> "Affine":
        """Add a linear term ``da . x + dd``."""
        return Affine(self.a + np.asarray(da, dtype=float), self.d + dd)


@dataclass(frozen=True)
class DiagQuadratic:
    """``0.5 * sum q_i x_i^2 + a . x + d`` with ``q >= 0``."""

    q: np.ndarray
    a: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        q = _vec(self.q, "q")
        a = _vec(self.a, "a")
        if q.shape != a.shape:
            raise ConjugateError(f"q has {q.shape[0]} entries, a has {a.shape[0]}")
        if np.any(q < 0):
            raise ConjugateError("q must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "d", float(self.d))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * self.q @ (x * x) + self.a @ x + self.d)

    def grad(self, x) -> np.ndarray:
        return self.q * np.asarray(x, dtype=float) + self.a

    def shifted(self, da, dd: float = 0.0) -> "DiagQuadratic":
        return DiagQuadratic(self.q, self.a + np.asarray(da, dtype=float), self.d + dd)


XFunction = Affine | DiagQuadratic


@dataclass(frozen=True)
class ConjugateValue:
    finite: bool
    value: float = math.inf

    @classmethod
    def infinite(cls) -> "ConjugateValue":
        return cls(False, math.inf)

    @classmethod
    def of(cls, v: float) -> "ConjugateValue":
        return cls(True, float(v))

    def __float__(self) -> float:
        return self.value if self.finite else math.inf


INF = ConjugateValue.infinite()


def conjugate(f: XFunction, dstar, tol: float = ZERO_TOL) -> ConjugateValue:
    """``sup_x dstar . x - f(x)``."""
    y = np.asarray(dstar, dtype=float).reshape(-1)
    if y.shape[0] != f.dim:
        raise ConjugateError(f"dstar has {y.shape[0]} entries, function has dimension {f.dim}")
    r = y - f.a
    if isinstance(f, Affine):
        return ConjugateValue.of(-f.d) if np.all(np.abs(r) <= tol) else INF
    flat = f.q == 0
    if np.any(np.abs(r[flat]) > tol):
        return INF
    pos = ~flat
    return ConjugateValue.of(float(np.sum(r[pos] ** 2 / (2 * f.q[pos]))) - f.d)


def conjugate_argmax(f: XFunction, dstar) -> np.ndarray:
    """A maximizer of ``dstar . x - f(x)`` when the conjugate is finite (0 on flat coordinates)."""
    y = np.asarray(dstar, dtype=float)
    x = np.zeros(f.dim)
    if isinstance(f, DiagQuadratic):
        pos = f.q > 0
        x[pos] = (y[pos] - f.a[pos]) / f.q[pos]
    return x


def right_scale(h: Callable[..., ConjugateValue], c: float, z, dstar, tol: float = ZERO_TOL) -> ConjugateValue:
    """Perspective ``c * h(z / c, dstar / c)``; at ``c = 0`` the indicator of the origin."""
    if c < 0:
        raise ConjugateError(f"scale must be nonnegative, got {c}")
    z = np.asarray(z, dtype=float)
    dstar = np.asarray(dstar, dtype=float)
    if c == 0:
        small = np.all(np.abs(z) <= tol) and np.all(np.abs(dstar) <= tol)
        return ConjugateValue.of(0.0) if small else INF
    inner = h(z / c, dstar / c)
    return ConjugateValue.of(c * inner.value) if inner.finite else INF


def ri_membership(z, wstar: float, vertices: Sequence, delta: float = 1e-9) -> bool:
    """Whether ``z / wstar`` is a convex combination of ``vertices`` with every weight >= ``delta``.

    ``delta = 0`` gives plain convex-hull membership. For ``delta > 0`` the
    largest achievable smallest weight is computed and compared with ``delta``,
    so the answer does not hinge on the LP feasibility tolerance.
    """
    if not wstar > 0:
        raise ConjugateError(f"wstar must be positive, got {wstar}")
    V = np.asarray(vertices, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] == 0:
        raise ConjugateError("vertex list is empty")
    p = np.asarray(z, dtype=float).reshape(-1) / wstar
    if p.shape[0] != V.shape[1]:
        raise ConjugateError(f"point has dimension {p.shape[0]}, vertices have {V.shape[1]}")
    nv = V.shape[0]
    if nv * delta > 1 + 1e-15:
        return False
    # weights mu + s with mu >= 0; maximize the common floor s
    A = np.vstack([np.hstack([V.T, V.sum(axis=0)[:, None]]), np.r_[np.ones(nv), nv][None, :]])
    b = np.concatenate([p, [1.0]])
    c = np.r_[np.zeros(nv), -1.0]
    sol = solve_lp(LpProblem(c, A, b, np.zeros(nv + 1), np.r_[np.full(nv, np.inf), 1.0 / nv]))
    if not sol.optimal:
        return False
    return delta <= 0 or -sol.value >= delta
