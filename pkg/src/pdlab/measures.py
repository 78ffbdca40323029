"""Finite measures on V x W grids, couplings with a fixed first marginal, and mixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-12


class MeasureError(ValueError):
    pass


def _ro(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _as_points(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise MeasureError(f"points must be a list of vectors, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class ProductGrid:
    """Cartesian product ``v_points x w_points``; flat index ``k = a * len(w) + b``."""

    v_points: np.ndarray
    w_points: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        v = _as_points(self.v_points)
        w = np.asarray(self.w_points, dtype=float).reshape(-1)
        if v.shape[0] == 0 or w.shape[0] == 0:
            raise MeasureError("grid must be nonempty")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise MeasureError("grid points must be finite")
        if np.any(np.diff(w) <= 0):
            raise MeasureError("w_points must be strictly increasing")
        if np.unique(v, axis=0).shape[0] != v.shape[0]:
            raise MeasureError("v_points must be distinct")
        object.__setattr__(self, "v_points", _ro(v))
        object.__setattr__(self, "w_points", _ro(w))

    @property
    def size(self) -> int:
        return self.v_points.shape[0] * self.w_points.shape[0]

    @property
    def v(self) -> np.ndarray:
        """v-coordinate of every flat grid point, shape (K, dv)."""
        return np.repeat(self.v_points, self.w_points.shape[0], axis=0)

    @property
    def w(self) -> np.ndarray:
        """w-coordinate of every flat grid point, shape (K,)."""
        return np.tile(self.w_points, self.v_points.shape[0])

    def index(self, a: int, b: int) -> int:
        return a * self.w_points.shape[0] + b

    def __eq__(self, other):
        if not isinstance(other, ProductGrid):
            return NotImplemented
        return (
            self.v_points.shape == other.v_points.shape
            and self.w_points.shape == other.w_points.shape
            and np.array_equal(self.v_points, other.v_points)
            and np.array_equal(self.w_points, other.w_points)
        )

    __hash__ = None


@dataclass(frozen=True)
class DiscreteMeasure:
    grid: ProductGrid
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float).reshape(-1)
        if m.shape[0] != self.grid.size:
            raise MeasureError(f"mass has {m.shape[0]} entries, grid has {self.grid.size}")
        if np.any(m < 0):
            raise MeasureError("negative mass")
        if abs(m.sum() - 1.0) > MASS_TOL * max(1, m.shape[0]):
            raise MeasureError(f"masses sum to {m.sum()!r}, not 1")
        object.__setattr__(self, "mass", _ro(m))


@dataclass(frozen=True)
class Support:
    """Atoms of the reference measure: points ``(v_j, w_j)`` with masses ``mu_j``.

    Conditioning groups are the distinct ``v_j`` (bitwise equality), numbered
    in order of first appearance.
    """

    v: np.ndarray
    w: np.ndarray
    mass: np.ndarray
    group_of: np.ndarray = field(init=False, repr=False)
    group_v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = _as_points(self.v)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        m = np.asarray(self.mass, dtype=float).reshape(-1)
        if not (v.shape[0] == w.shape[0] == m.shape[0]) or v.shape[0] == 0:
            raise MeasureError("support arrays must be nonempty with matching lengths")
        if np.any(m < 0) or abs(m.sum() - 1.0) > MASS_TOL * max(1, m.shape[0]):
            raise MeasureError("support masses must be a probability vector")
        keys: dict[bytes, int] = {}
        gof = np.empty(v.shape[0], dtype=int)
        for j, row in enumerate(v):
            gof[j] = keys.setdefault(row.tobytes(), len(keys))
        gv = np.array([v[np.flatnonzero(gof == g)[0]] for g in range(len(keys))])
        object.__setattr__(self, "v", _ro(v))
        object.__setattr__(self, "w", _ro(w))
        object.__setattr__(self, "mass", _ro(m))
        object.__setattr__(self, "group_of", _ro(gof, int))
        object.__setattr__(self, "group_v", _ro(gv))

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    @property
    def n_groups(self) -> int:
        return self.group_v.shape[0]

    @property
    def group_mass(self) -> np.ndarray:
        return np.bincount(self.group_of, weights=self.mass, minlength=self.n_groups)

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> "Support":
        keep = np.flatnonzero(mu.mass > 0)
        return cls(mu.grid.v[keep], mu.grid.w[keep], mu.mass[keep] / mu.mass[keep].sum())

    def __eq__(self, other):
        if not isinstance(other, Support):
            return NotImplemented
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in ((self.v, other.v), (self.w, other.w), (self.mass, other.mass))
        )

    __hash__ = None


@dataclass(frozen=True)
class Coupling:
    """Mass matrix ``gamma[j, k]`` from support atom ``j`` to grid point ``k``."""

    first: Support
    grid: ProductGrid
    mass: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.mass, dtype=float)
        shape = (self.first.size, self.grid.size)
        if g.shape != shape:
            raise MeasureError(f"mass matrix has shape {g.shape}, expected {shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise MeasureError("coupling masses must be finite and nonnegative")
        err = np.max(np.abs(g.sum(axis=1) - self.first.mass))
        if err > MASS_TOL * max(1, shape[1]) ** 0.5:
            raise MeasureError(f"row sums differ from the first marginal by {err:.3g}")
        object.__setattr__(self, "mass", _ro(g))

    @classmethod
    def normalized(cls, first: Support, grid: ProductGrid, mass) -> "Coupling":
        """Clip round-off negatives and rescale rows onto the first marginal."""
        g = np.clip(np.asarray(mass, dtype=float), 0.0, None)
        rows = g.sum(axis=1)
        for j in range(g.shape[0]):
            if rows[j] > 0:
                g[j] *= first.mass[j] / rows[j]
            elif first.mass[j] > 0:
                raise MeasureError(f"row {j} carries no mass")
        return cls(first, grid, g)

    def same_index(self, other: "Coupling") -> bool:
        return self.first == other.first and self.grid == other.grid


@dataclass(frozen=True)
class ConditionalResidual:
    """Per-group ``E[W | v] - h(v)`` together with the group masses."""

    values: np.ndarray
    group_mass: np.ndarray

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values) * self.group_mass))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_same(g1: Coupling, g2: Coupling):
    if not g1.same_index(g2):
        raise MeasureError("couplings live on different index sets")


def second_marginal(gamma: Coupling) -> DiscreteMeasure:
    col = gamma.mass.sum(axis=0)
    return DiscreteMeasure(gamma.grid, col / col.sum())


def conditional_residual(gamma: Coupling, h) -> ConditionalResidual:
    sup = gamma.first
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape[0] != sup.n_groups:
        raise MeasureError(f"h has {h.shape[0]} entries for {sup.n_groups} groups")
    nu = sup.group_mass
    if np.any(nu <= 0):
        raise MeasureError(f"group {int(np.argmin(nu))} has zero mass; conditioning undefined")
    moment = np.bincount(sup.group_of, weights=gamma.mass @ gamma.grid.w, minlength=sup.n_groups)
    return ConditionalResidual(moment / nu - h, nu)


def tv_distance(g1: Coupling, g2: Coupling) -> float:
    _check_same(g1, g2)
    return 0.5 * float(np.abs(g1.mass - g2.mass).sum())


def mix(g1: Coupling, g2: Coupling, t: float) -> Coupling:
    if not 0.0 <= t <= 1.0:
        raise MeasureError(f"mixing weight {t} outside [0, 1]")
    _check_same(g1, g2)
    if t == 0.0:
        return g1
    if t == 1.0:
        return g2
    return Coupling(g1.first, g1.grid, (1.0 - t) * g1.mass + t * g2.mass)


def expectation(gamma: Coupling, g) -> float:
    g = np.asarray(g, dtype=float)
    if g.ndim == 1 and g.shape[0] == gamma.grid.size:
        return float(gamma.mass.sum(axis=0) @ g)
    if g.shape != gamma.mass.shape:
        raise MeasureError(f"table shape {g.shape} does not match coupling {gamma.mass.shape}")
    return float(np.sum(gamma.mass * g))


def transport_cost(gamma: Coupling, cost) -> float:
    """``E_gamma[c]`` where zero mass on an infinite-cost pair contributes nothing."""
    cost = np.asarray(cost, dtype=float)
    if cost.shape != gamma.mass.shape:
        raise MeasureError(f"cost shape {cost.shape} does not match coupling {gamma.mass.shape}")
    live = gamma.mass > 0
    return float(np.sum(gamma.mass[live] * cost[live]))
