"""Instance families and the JSON instance file format.

File layout::

    {"version": 1, "kind": "Example32", "params": {"eps": 0.5, "n": 4}, "seed": 0}
    {"version": 1, "kind": "CustomCm", "payload": {...}, "seed": 0}

Infinite costs are written as the string ``"inf"``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import norm

from . import cm_wasserstein as cm
from .cm_wasserstein import CmInstance
from .conjugate import Affine, DiagQuadratic
from .measures import ProductGrid, Support
from .robust import BiFunction, UncertainProgram

FORMAT_VERSION = 1


class InstanceError(ValueError):
    """Invalid parameters or a malformed instance file."""


class SchemaError(InstanceError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# cost and objective rules, kept module-level so instances stay picklable


def same_v_cost(first: Support, grid: ProductGrid, power: float | None = None) -> np.ndarray:
    """0 (or ``|w - w_hat|^power``) when ``v == v_hat``, +inf otherwise."""
    same = np.all(first.v[:, None, :] == grid.v[None, :, :], axis=2)
    if power is None:
        base = np.zeros(same.shape)
    else:
        base = np.abs(grid.w[None, :] - first.w[:, None]) ** power
    return np.where(same, base, np.inf)


def below_one(grid: ProductGrid) -> np.ndarray:
    return (grid.w < 1.0).astype(float)


def linear_in_v(grid: ProductGrid) -> np.ndarray:
    return grid.v[:, 0] * (grid.w - 1.0)


def heavy_tail_penalty(grid: ProductGrid) -> np.ndarray:
    return -1.0 / (1.0 + np.abs(grid.w))


def template_objective(grid: ProductGrid, table: tuple) -> np.ndarray:
    """``g(v) 1{w = 0}`` with ``g`` looked up from ``((v, g), ...)``."""
    lookup = dict(table)
    g = np.array([lookup[float(v)] for v in grid.v[:, 0]])
    return np.where(grid.w == 0.0, g, 0.0)


# generators


def _grid_w(n: int, hi: float) -> np.ndarray:
    return np.arange(n + 1) / n * hi


def example32(eps: float, n: int, extend: bool = False) -> CmInstance:
    """Single atom at the origin, ``f = 1{w < 1}``, ``E[W] = 1``, budget ``E[W^2] <= 1 + eps``.

    With ``extend`` the w-grid runs past 1 up to ``1 + sqrt(eps)``.
    """
    if not eps > 0:
        raise InstanceError(f"eps must be positive, got {eps}")
    if n < 2:
        raise InstanceError(f"grid size n must be at least 2, got {n}")
    if extend:
        top = 1.0 + math.sqrt(eps)
        k = np.arange(int(math.floor(top * n)) + 1)
        w = k / n
        w = w[w < top]
        w = np.append(w, top)
    else:
        w = _grid_w(n, 1.0)
    first = Support([[0.0]], [0.0], [1.0])
    grid = ProductGrid([[0.0]], w)
    rule = functools.partial(same_v_cost, power=2.0)
    return CmInstance(
        first, grid, rule(first, grid), below_one(grid), [1.0], 1.0 + eps,
        cost_rule=rule, f_rule=below_one, name="example32-mod" if extend else "example32",
    )


def normal_quantiles(J: int) -> np.ndarray:
    return norm.ppf((np.arange(1, J + 1) - 0.5) / J)


def lemma31(J: int, R: float, n_w: int) -> CmInstance:
    """Equiprobable normal quantiles in ``v``, ``f = v (w - 1)``, transport only along ``w``."""
    if J < 2 or n_w < 2:
        raise InstanceError("J and n_w must be at least 2")
    if not R > 1:
        raise InstanceError(f"R must exceed 1 so that the moment target is interior, got {R}")
    v = normal_quantiles(J)
    first = Support(v[:, None], np.ones(J), np.full(J, 1.0 / J))
    grid = ProductGrid(v[:, None], np.linspace(0.0, R, n_w))
    return CmInstance(
        first, grid, same_v_cost(first, grid), linear_in_v(grid), np.ones(J), 1.0,
        cost_rule=same_v_cost, f_rule=linear_in_v, name="lemma31",
    )


def lemma34(v_points, g_values, rho: float = 1.0, name: str = "lemma34") -> CmInstance:
    """Two-point template: ``W in {0, 2}``, ``h = 1``, ``f = g(v) 1{w = 0}``, uniform weights."""
    v = np.asarray(v_points, dtype=float).reshape(-1)
    g = np.asarray(g_values, dtype=float).reshape(-1)
    if v.shape != g.shape or v.size == 0:
        raise InstanceError("v_points and g_values must be nonempty with equal length")
    if not rho > 0:
        raise InstanceError(f"rho must be positive, got {rho}")
    J = v.size
    first = Support(v[:, None], np.zeros(J), np.full(J, 1.0 / J))
    grid = ProductGrid(v[:, None], [0.0, 2.0])
    f_rule = functools.partial(template_objective, table=tuple(zip(v.tolist(), g.tolist())))
    return CmInstance(
        first, grid, same_v_cost(first, grid), f_rule(grid), np.ones(J), rho,
        cost_rule=same_v_cost, f_rule=f_rule, name=name,
    )


def example35(n: int, rho: float = 1.0) -> CmInstance:
    """Template with ``g(v) = -1/sqrt(v)`` on ``{1/n, ..., 1}``."""
    if n < 2:
        raise InstanceError(f"n must be at least 2, got {n}")
    v = np.arange(1, n + 1) / n
    return lemma34(v, -1.0 / np.sqrt(v), rho, name="example35")


def fat_cantor_intervals(depth: int) -> list[tuple[float, float]]:
    """Closed intervals left after ``depth`` rounds of middle-``4^-k`` removal from [0, 1]."""
    if depth < 0:
        raise InstanceError("depth must be nonnegative")
    pieces = [(0.0, 1.0)]
    for k in range(1, depth + 1):
        gap = 0.25**k
        nxt = []
        for lo, hi in pieces:
            mid = 0.5 * (lo + hi)
            nxt += [(lo, mid - gap / 2), (mid + gap / 2, hi)]
        pieces = nxt
    return pieces


def fat_cantor_measure(depth: int) -> float:
    return 1.0 - sum(2 ** (k - 1) / 4**k for k in range(1, depth + 1))


def fat_cantor(depth: int, n: int, rho: float = 1.0) -> CmInstance:
    """Template with ``g = -1`` on the removed open set and 0 on the remainder, at cell midpoints."""
    if n < 2:
        raise InstanceError(f"n must be at least 2, got {n}")
    v = (np.arange(n) + 0.5) / n
    keep = np.zeros(n, dtype=bool)
    for lo, hi in fat_cantor_intervals(depth):
        keep |= (v >= lo) & (v <= hi)
    return lemma34(v, np.where(keep, 0.0, -1.0), rho, name="fatcantor")


def example33(R: float, n: int) -> CmInstance:
    """``f = -1/(1 + |w|)`` on a symmetric w-grid, free transport, ``E[W] = 1``."""
    if not R > 1:
        raise InstanceError(f"R must exceed 1, got {R}")
    if n < 2:
        raise InstanceError(f"n must be at least 2, got {n}")
    first = Support([[0.0]], [0.0], [1.0])
    grid = ProductGrid([[0.0]], np.linspace(-R, R, n))
    return CmInstance(
        first, grid, same_v_cost(first, grid), heavy_tail_penalty(grid), [1.0], 1.0,
        cost_rule=same_v_cost, f_rule=heavy_tail_penalty, name="example33",
    )


def random_cm(seed: int, J: int = 4, n_v: int = 3, n_w: int = 5, inf_frac: float = 0.2) -> CmInstance:
    """Random instance where both slack conditions hold.

    Atoms sit on grid points and ``w_hat`` avoids the grid ends, so every
    conditional mean can move both ways. ``h`` is the conditional mean of the
    atoms plus a small offset; without it the identity coupling meets every
    moment row exactly and the optimal multipliers are typically not unique.
    The budget is the cheapest feasible cost plus a margin in [0.2, 1).
    """
    rng = np.random.default_rng(seed)
    if n_w < 3:
        raise InstanceError("random instances need n_w >= 3")
    vg = np.sort(rng.choice(np.arange(-20, 21), size=n_v, replace=False)) / 10.0
    wg = np.sort(rng.choice(np.arange(-40, 41), size=n_w, replace=False)) / 10.0
    a = rng.integers(0, n_v, size=J)
    b = rng.integers(1, n_w - 1, size=J)
    mass = rng.dirichlet(np.ones(J))
    mass = mass / mass.sum()
    first = Support(vg[a][:, None], wg[b], mass)
    grid = ProductGrid(vg[:, None], wg)
    dv = np.abs(first.v[:, None, 0] - grid.v[None, :, 0])
    cost = dv + (grid.w[None, :] - first.w[:, None]) ** 2
    drop = (rng.random(cost.shape) < inf_frac) & (dv > 0)
    cost = np.where(drop, np.inf, cost)
    nu = first.group_mass
    h = np.bincount(first.group_of, weights=mass * first.w, minlength=first.n_groups) / nu
    h = h + rng.uniform(-0.03, 0.03, size=h.shape)
    f = rng.normal(size=grid.size)
    probe = CmInstance(first, grid, cost, f, h, 1.0)
    a1 = cm.check_assumption_a1(probe)
    rho = float(1.0 - a1.a_value + rng.uniform(0.2, 1.0))
    return CmInstance(first, grid, cost, f, h, rho, name=f"random-cm-{seed}")


# robust program generators


def toy_robust_lp() -> UncertainProgram:
    """``min x`` s.t. ``1 - z x <= 0`` for ``z in [1, 2]``."""
    return UncertainProgram(
        [
            BiFunction(Affine([1.0], 0.0), np.zeros((1, 1)), [0.0], 0.0),
            BiFunction(Affine([0.0], 1.0), [[-1.0]], [0.0], 0.0),
        ],
        [[1.0], [2.0]],
    )


def random_pw(seed: int, quadratic: bool = False, n: int | None = None, m: int | None = None,
              n_vertices: int | None = None, box: float = 5.0) -> UncertainProgram:
    """Random robust program with a strict robust Slater point at ``x0`` inside a box."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5)) if n is None else n
    m = int(rng.integers(1, 4)) if m is None else m
    nz = int(rng.integers(1, 3))
    nv = int(rng.integers(1, 6)) if n_vertices is None else n_vertices
    Z = rng.uniform(-1, 1, size=(nv, nz))
    x0 = rng.uniform(-1, 1, size=n)
    funcs = []
    for i in range(m + 1):
        P = rng.normal(size=(n, nz)) * 0.5
        c = rng.normal(size=nz) * 0.5
        a = rng.normal(size=n)
        if quadratic:
            q = rng.uniform(0.5, 2.0, size=n) if i == 0 else rng.uniform(0.0, 1.0, size=n)
            xpart = DiagQuadratic(q, a, 0.0)
        else:
            xpart = Affine(a, 0.0)
        if i == 0:
            funcs.append(BiFunction(xpart, P, c, float(rng.normal())))
            continue
        # shift so the worst case at x0 is strictly negative
        worst = max(xpart.value(x0) + x0 @ P @ z + c @ z for z in Z)
        funcs.append(BiFunction(xpart, P, c, -worst - rng.uniform(0.2, 1.0)))
    return UncertainProgram(funcs, Z, x_bounds=(np.full(n, -box), np.full(n, box)))


# specs and files


def _require(params: dict, name: str, kind: str):
    if name not in params:
        raise SchemaError(name, f"missing parameter for {kind}")
    return params[name]


def _gen_example32(p, seed):
    return example32(float(_require(p, "eps", "Example32")), int(_require(p, "n", "Example32")))


def _gen_example32_mod(p, seed):
    return example32(float(_require(p, "eps", "Example32Modified")), int(_require(p, "n", "Example32Modified")), True)


def _gen_lemma31(p, seed):
    return lemma31(int(_require(p, "J", "Lemma31")), float(_require(p, "R", "Lemma31")), int(_require(p, "n_w", "Lemma31")))


def _gen_lemma34(p, seed):
    return lemma34(_require(p, "v_points", "Lemma34"), _require(p, "g_values", "Lemma34"), float(p.get("rho", 1.0)))


def _gen_example35(p, seed):
    return example35(int(_require(p, "n", "Example35")), float(p.get("rho", 1.0)))


def _gen_fat_cantor(p, seed):
    return fat_cantor(int(_require(p, "depth", "FatCantor")), int(_require(p, "n", "FatCantor")), float(p.get("rho", 1.0)))


def _gen_example33(p, seed):
    return example33(float(_require(p, "R", "Example33")), int(_require(p, "n", "Example33")))


def _gen_random_cm(p, seed):
    return random_cm(seed, **{k: p[k] for k in ("J", "n_v", "n_w", "inf_frac") if k in p})


def _gen_random_pw(p, seed):
    return random_pw(seed, **{k: p[k] for k in ("quadratic", "n", "m", "n_vertices", "box") if k in p})


GENERATORS = {
    "Example32": _gen_example32,
    "Example32Modified": _gen_example32_mod,
    "Lemma31": _gen_lemma31,
    "Lemma34": _gen_lemma34,
    "Example35": _gen_example35,
    "FatCantor": _gen_fat_cantor,
    "Example33": _gen_example33,
    "RandomCm": _gen_random_cm,
    "RandomPw": _gen_random_pw,
}
PAYLOAD_KINDS = ("CustomCm", "CustomPw")


@dataclass(frozen=True)
class InstanceSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATORS and self.kind not in PAYLOAD_KINDS:
            raise SchemaError("kind", f"unknown instance kind {self.kind!r}")

    def generate(self):
        if self.kind == "CustomCm":
            return cm_from_payload(self.params)
        if self.kind == "CustomPw":
            return pw_from_payload(self.params)
        return GENERATORS[self.kind](self.params, self.seed)

    def to_json(self) -> dict:
        key = "payload" if self.kind in PAYLOAD_KINDS else "params"
        return {"version": FORMAT_VERSION, "kind": self.kind, key: self.params, "seed": self.seed}


def generate(spec: InstanceSpec):
    return spec.generate()


def _enc(x):
    """Arrays to nested lists with +inf spelled ``"inf"``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        v = float(arr)
        return "inf" if v == math.inf else v
    return [_enc(r) for r in arr]


def _dec(x, name: str):
    def conv(v):
        if isinstance(v, list):
            return [conv(u) for u in v]
        if v == "inf":
            return math.inf
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(name, f"expected a number or 'inf', got {v!r}")
        return float(v)

    return np.asarray(conv(x), dtype=float)


def cm_payload(inst: CmInstance) -> dict:
    return {
        "v_points": _enc(inst.grid.v_points),
        "w_points": _enc(inst.grid.w_points),
        "support_v": _enc(inst.first.v),
        "support_w": _enc(inst.first.w),
        "mu_hat": _enc(inst.first.mass),
        "cost": _enc(inst.cost),
        "f": _enc(inst.f),
        "h": _enc(inst.h),
        "rho": inst.rho,
        "name": inst.name,
    }


def cm_from_payload(p: dict) -> CmInstance:
    if not isinstance(p, dict):
        raise SchemaError("payload", "expected an object")
    get = lambda k: _dec(_require(p, k, "CustomCm"), k)  # noqa: E731
    try:
        grid = ProductGrid(get("v_points"), get("w_points"))
        mu = get("mu_hat")
        if "support_v" in p or "support_w" in p:
            first = Support(get("support_v"), get("support_w"), mu)
        else:
            if mu.shape != (grid.size,):
                raise SchemaError("mu_hat", f"expected {grid.size} grid masses, got shape {mu.shape}")
            keep = np.flatnonzero(mu > 0)
            first = Support(grid.v[keep], grid.w[keep], mu[keep])
        rho = float(get("rho"))
        return CmInstance(first, grid, get("cost"), get("f"), get("h"), rho, name=str(p.get("name", "custom")))
    except SchemaError:
        raise
    except ValueError as exc:
        raise InstanceError(f"payload: {exc}") from exc


def _xpart_payload(x) -> dict:
    if isinstance(x, DiagQuadratic):
        return {"type": "DiagQuadratic", "q": _enc(x.q), "a": _enc(x.a), "d": x.d}
    return {"type": "Affine", "a": _enc(x.a), "d": x.d}


def pw_payload(prog: UncertainProgram) -> dict:
    out = {
        "n": prog.n,
        "m": prog.m,
        "Z_vertices": _enc(prog.Z),
        "functions": [
            {"P": _enc(f.P), "xpart": _xpart_payload(f.xpart), "c": _enc(f.c), "d": f.d} for f in prog.functions
        ],
    }
    if prog.x_bounds is not None:
        out["x_bounds"] = [_enc(prog.x_bounds[0]), _enc(prog.x_bounds[1])]
    return out


def pw_from_payload(p: dict) -> UncertainProgram:
    if not isinstance(p, dict):
        raise SchemaError("payload", "expected an object")
    funcs = []
    for i, fp in enumerate(_require(p, "functions", "CustomPw")):
        where = f"functions[{i}]"
        if not isinstance(fp, dict):
            raise SchemaError(where, "expected an object")
        xp = _require(fp, "xpart", where)
        typ = _require(xp, "type", f"{where}.xpart")
        a = _dec(_require(xp, "a", f"{where}.xpart"), f"{where}.xpart.a")
        d = float(_dec(xp.get("d", 0.0), f"{where}.xpart.d"))
        if typ == "Affine":
            xpart = Affine(a, d)
        elif typ == "DiagQuadratic":
            xpart = DiagQuadratic(_dec(_require(xp, "q", f"{where}.xpart"), f"{where}.xpart.q"), a, d)
        else:
            raise SchemaError(f"{where}.xpart.type", f"unknown x-function type {typ!r}")
        funcs.append(
            BiFunction(
                xpart,
                _dec(_require(fp, "P", where), f"{where}.P"),
                _dec(_require(fp, "c", where), f"{where}.c"),
                float(_dec(fp.get("d", 0.0), f"{where}.d")),
            )
        )
    Z = _dec(_require(p, "Z_vertices", "CustomPw"), "Z_vertices")
    bounds = None
    if p.get("x_bounds") is not None:
        lo, hi = p["x_bounds"]
        bounds = (_dec(lo, "x_bounds[0]"), _dec(hi, "x_bounds[1]"))
    try:
        prog = UncertainProgram(funcs, Z, x_bounds=bounds)
    except ValueError as exc:
        raise InstanceError(f"payload: {exc}") from exc
    for key, want in (("n", prog.n), ("m", prog.m)):
        if key in p and int(p[key]) != want:
            raise SchemaError(key, f"declared {p[key]} but functions imply {want}")
    return prog


def spec_of(obj) -> InstanceSpec:
    if isinstance(obj, InstanceSpec):
        return obj
    if isinstance(obj, CmInstance):
        return InstanceSpec("CustomCm", cm_payload(obj))
    if isinstance(obj, UncertainProgram):
        return InstanceSpec("CustomPw", pw_payload(obj))
    raise InstanceError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(spec_of(obj).to_json(), indent=1)


def save(obj, path) -> None:
    """Write an :class:`InstanceSpec`, :class:`CmInstance` or :class:`UncertainProgram`."""
    Path(path).write_text(dumps(obj) + "\n")


def parse_spec(text: str) -> InstanceSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected an object")
    version = doc.get("version")
    if version is None:
        raise SchemaError("version", "missing")
    if version != FORMAT_VERSION:
        raise SchemaError("version", f"unsupported version {version!r}, expected {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind is None:
        raise SchemaError("kind", "missing")
    key = "payload" if kind in PAYLOAD_KINDS else "params"
    body = doc.get(key, {} if key == "params" else None)
    if body is None:
        raise SchemaError(key, f"missing for kind {kind}")
    if not isinstance(body, dict):
        raise SchemaError(key, "expected an object")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise SchemaError("seed", "expected an integer")
    return InstanceSpec(kind, body, seed)


def load_spec(path) -> InstanceSpec:
    return parse_spec(Path(path).read_text())


def load(path):
    """Read an instance file and build the instance it describes."""
    return load_spec(path).generate()


def loads(text: str):
    return parse_spec(text).generate()


def instances_equal(a, b) -> bool:
    """Bitwise comparison of every numeric field."""
    if type(a) is not type(b):
        return False
    if isinstance(a, CmInstance):
        pairs = [
            (a.first.v, b.first.v), (a.first.w, b.first.w), (a.first.mass, b.first.mass),
            (a.grid.v_points, b.grid.v_points), (a.grid.w_points, b.grid.w_points),
            (a.cost, b.cost), (a.f, b.f), (a.h, b.h), (a.rho, b.rho),
        ]
    else:
        if len(a.functions) != len(b.functions):
            return False
        pairs = [(a.Z, b.Z)]
        for fa, fb in zip(a.functions, b.functions):
            if type(fa.xpart) is not type(fb.xpart):
                return False
            pairs += [(fa.P, fb.P), (fa.c, fb.c), (fa.d, fb.d), (fa.xpart.a, fb.xpart.a), (fa.xpart.d, fb.xpart.d)]
            if isinstance(fa.xpart, DiagQuadratic):
                pairs.append((fa.xpart.q, fb.xpart.q))
        if (a.x_bounds is None) != (b.x_bounds is None):
            return False
        if a.x_bounds is not None:
            pairs += [(a.x_bounds[0], b.x_bounds[0]), (a.x_bounds[1], b.x_bounds[1])]
    for x, y in pairs:
        x, y = np.asarray(x), np.asarray(y)
        if x.shape != y.shape or x.tobytes() != y.tobytes():
            return False
    return True


def with_params(spec: InstanceSpec, **updates: Any) -> InstanceSpec:
    return InstanceSpec(spec.kind, {**spec.params, **updates}, spec.seed)
