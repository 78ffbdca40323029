"""Command-line front end: ``pdlab {solve,refine,pwdb,suite,gen}``.

Exit codes: 0 success, 1 acceptance failure, 2 input error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance
from . import cm_wasserstein as cm
from . import instances as inst
from . import robust as rb
from .conjugate import ConjugateError
from .lp import LpError
from .measures import MeasureError
from .qcp import QcpError

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

CSV_COLUMNS = ("instance", "n", "primal", "dual", "psi_norm", "lambda", "residual_ip", "status")

KIND_ALIASES = {
    "example32": "Example32",
    "example32-mod": "Example32Modified",
    "lemma31": "Lemma31",
    "lemma34": "Lemma34",
    "example35": "Example35",
    "fat-cantor": "FatCantor",
    "example33": "Example33",
    "random-cm": "RandomCm",
    "random-pw": "RandomPw",
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "version", "seed", "wall_time", "rows", "checks", "exit_code"],
    "properties": {
        "command": {"type": "array", "items": {"type": "string"}},
        "version": {"type": "string"},
        "seed": {"type": "integer"},
        "wall_time": {"type": "number", "minimum": 0},
        "exit_code": {"type": "integer", "enum": [0, 1, 2, 3]},
        "rows": {
            "type": "array",
            "items": {"type": "object", "required": ["instance", "spec_hash"]},
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed", "seconds", "limit", "metrics", "failures", "spec_hash"],
                "properties": {"passed": {"type": "boolean"}, "failures": {"type": "array"}},
            },
        },
    },
}


class InputError(Exception):
    pass


@dataclass
class RunReport:
    command: list
    seed: int = 0
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    wall_time: float = 0.0
    version: str = __version__
    exit_code: int = EXIT_OK

    def as_dict(self) -> dict:
        return {
            "command": list(self.command),
            "version": self.version,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "exit_code": self.exit_code,
            "rows": [_clean(r) for r in self.rows],
            "checks": [_clean(c) for c in self.checks],
        }


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats spelled as strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def spec_hash(spec: inst.InstanceSpec | dict) -> str:
    doc = spec.to_json() if isinstance(spec, inst.InstanceSpec) else spec
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _kind(name: str) -> str:
    if name in inst.GENERATORS or name in inst.PAYLOAD_KINDS:
        return name
    try:
        return KIND_ALIASES[name.lower()]
    except KeyError:
        raise InputError(f"unknown kind {name!r}; choose from {', '.join(KIND_ALIASES)}") from None


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in CSV_COLUMNS})


def _num(x) -> str:
    return f"{x + 0.0:.10g}" if isinstance(x, (float, np.floating)) else str(x)


# solve


def _load_cm(path) -> tuple[cm.CmInstance, inst.InstanceSpec]:
    if not Path(path).is_file():
        raise InputError(f"no such instance file: {path}")
    spec = inst.load_spec(path)
    obj = spec.generate()
    if not isinstance(obj, cm.CmInstance):
        raise InputError(f"{path} holds a robust program; use `pdlab pwdb`")
    return obj, spec


def cmd_solve(args, report: RunReport) -> int:
    x, spec = _load_cm(args.path)
    res = cm.solve_primal(x)
    row = {"instance": x.name or Path(args.path).stem, "n": x.grid.size, "spec_hash": spec_hash(spec)}
    if not res.feasible:
        row.update(primal=-math.inf, status=res.status.value)
        print(f"primal: {res.status.value}")
        report.rows.append(row)
        _maybe_csv(args, report)
        return EXIT_OK
    ip = cm.eval_dual_ip(x, res.cert)
    resid = abs(ip - res.value)
    psi = np.asarray(res.cert.psi)
    row.update(
        primal=res.value,
        dual=res.cert.value,
        psi_norm=float(np.max(np.abs(psi))) if psi.size else 0.0,
        **{"lambda": res.cert.lam},
        residual_ip=resid,
        status="ok" if resid <= args.tol else "residual",
        psi=psi.tolist(),
    )
    print(f"instance: {row['instance']}")
    print(f"primal: {_num(res.value)}")
    print(f"dual:   {_num(res.cert.value)}")
    print(f"lambda: {_num(res.cert.lam)}")
    print("psi:")
    for g in range(psi.size):
        v = x.first.group_v[g]
        print(f"  v={','.join(_num(float(t)) for t in np.atleast_1d(v))}  psi={_num(float(psi[g]))}")
    print(f"ip residual: {resid:.3g}")
    report.rows.append(row)
    _maybe_csv(args, report)
    if args.coupling_csv:
        _write_coupling(args.coupling_csv, x, res.coupling)
    return EXIT_OK


def _maybe_csv(args, report):
    if getattr(args, "csv", None):
        _write_csv(args.csv, report.rows)


def _write_coupling(path, x: cm.CmInstance, gamma):
    """One row per support atom, one column per grid point."""
    grid = x.grid
    heads = []
    for k in range(grid.size):
        v = ",".join(_num(float(t)) for t in np.atleast_1d(grid.v[k]))
        heads.append(f"({v};{_num(float(grid.w[k]))})")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["atom", *heads])
        for j in range(x.first.size):
            w.writerow([j, *(_num(float(m)) for m in gamma.mass[j])])


# refine


def _family(kind: str, args):
    if kind in ("Example32", "Example32Modified"):
        return lambda n: inst.InstanceSpec(kind, {"eps": args.eps, "n": n})
    if kind == "Lemma31":
        return lambda J: inst.InstanceSpec(kind, {"J": J, "R": args.R, "n_w": args.n_w})
    if kind == "Example35":
        return lambda n: inst.InstanceSpec(kind, {"n": n, "rho": args.rho})
    if kind == "FatCantor":
        return lambda n: inst.InstanceSpec(kind, {"depth": args.depth, "n": n, "rho": args.rho})
    if kind == "Example33":
        return lambda n: inst.InstanceSpec(kind, {"R": args.R, "n": n})
    raise InputError(f"{kind} is not a refinement family")


def cmd_refine(args, report: RunReport) -> int:
    kind = _kind(args.kind)
    sizes = list(args.sizes) + list(args.J or [])
    if not sizes:
        raise InputError("give at least one size")
    if kind == "Example33" and args.R is None:
        args.R = 10.0
    if kind == "Lemma31" and args.R is None:
        args.R = 10.0
    make = _family(kind, args)
    specs = {n: make(n) for n in sizes}
    rows = cm.refinement_study(lambda n: specs[n].generate(), sizes)
    print(f"{'n':>6} {'primal':>14} {'dual':>14} {'psi_norm':>12} {'lambda':>12}")
    for r in rows:
        d = r.as_dict()
        d.update(instance=f"{args.kind}-{r.size}", residual_ip=abs(r.dual - r.primal), spec_hash=spec_hash(specs[r.size]))
        report.rows.append(d)
        print(f"{r.size:>6} {_num(r.primal):>14} {_num(r.dual):>14} {_num(r.psi_norm):>12} {_num(r.lam):>12}")
    expo = cm.blowup_exponent(rows)
    if math.isfinite(expo):
        print(f"psi_norm ~ n^{expo:.3f}")
    _maybe_csv(args, report)
    return EXIT_OK


# pwdb


def cmd_pwdb(args, report: RunReport) -> int:
    if not Path(args.path).is_file():
        raise InputError(f"no such instance file: {args.path}")
    spec = inst.load_spec(args.path)
    prog = spec.generate()
    if not isinstance(prog, rb.UncertainProgram):
        raise InputError(f"{args.path} holds a transport instance; use `pdlab solve`")
    pw = rb.primal_worst(prog)
    row = {"instance": Path(args.path).stem, "n": prog.n, "spec_hash": spec_hash(spec), "pw_value": pw.value}
    print(f"PW value: {_num(pw.value)} ({pw.status}, {pw.method})")
    db = math.nan
    pt = None
    if pw.optimal:
        pt = rb.db_construct_from_kkt(prog, pw)
        db = rb.db_evaluate(prog, pt)
        print(f"DB value: {_num(db)}")
        weights = np.r_[1.0, pt.wstar]
        for i in range(len(pt.z)):
            z = ",".join(_num(float(t)) for t in np.atleast_1d(pt.z[i]))
            d = ",".join(_num(float(t)) for t in np.atleast_1d(pt.dstar[i]))
            tag = "objective" if i == 0 else ("box" if i > prog.m else f"constraint {i}")
            print(f"  {tag:<13} w*={_num(float(weights[i]))}  z=({z})  d*=({d})")
    gap = abs(db - pw.value) if math.isfinite(db) and math.isfinite(pw.value) else math.inf
    slater = rb.check_prop41_i(prog)
    bounded = rb.check_prop41_ii(prog)
    ri = rb.check_prop42(prog, pt) if pt is not None else False
    print(f"gap: {gap:.3g}")
    print(f"strict feasibility: {'pass' if slater.holds else 'fail'}")
    print(f"bounded feasible set: {'pass' if bounded else 'fail'}")
    print(f"relative-interior point: {'pass' if ri else 'fail'}")
    row.update(db_value=db, gap=gap, slater=slater.holds, bounded=bounded, relint=ri,
               primal=pw.value, dual=db, status=pw.status)
    report.rows.append(row)
    _maybe_csv(args, report)
    return EXIT_OK


# suite


def cmd_suite(args, report: RunReport) -> int:
    names = args.only or list(acceptance.CHECKS)
    bad = [n for n in names if n not in acceptance.CHECKS]
    if bad:
        raise InputError(f"unknown check(s) {', '.join(bad)}; choose from {', '.join(acceptance.CHECKS)}")
    failed = []
    for name in names:
        res = acceptance.CHECKS[name](seed=args.seed)
        print(res.line(), flush=True)
        d = res.as_dict()
        d["spec_hash"] = spec_hash({"check": name, "seed": args.seed})
        report.checks.append(d)
        if not res.passed:
            failed.append(name)
    if failed:
        print(f"failing: {', '.join(failed)}")
        return EXIT_FAIL
    return EXIT_OK


# gen


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise InputError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def cmd_gen(args, report: RunReport) -> int:
    kind = _kind(args.kind)
    if kind in inst.PAYLOAD_KINDS:
        raise InputError(f"{kind} files are written by hand, not generated")
    spec = inst.InstanceSpec(kind, dict(_param(p) for p in args.set), args.seed)
    spec.generate()  # validate before writing
    inst.save(spec, args.output)
    print(f"wrote {args.output}")
    report.rows.append({"instance": Path(args.output).stem, "kind": kind, "spec_hash": spec_hash(spec)})
    return EXIT_OK


# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pdlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", metavar="PATH", help="write a machine-readable report")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-8, help="flag rows whose IP residual exceeds this")

    s = sub.add_parser("solve", help="solve a transport instance file")
    s.add_argument("path")
    s.add_argument("--csv", metavar="PATH", help="write the result row")
    s.add_argument("--coupling-csv", metavar="PATH", help="write the optimal coupling table")
    common(s)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("refine", help="solve a generator family over increasing sizes")
    r.add_argument("kind")
    r.add_argument("sizes", nargs="*", type=int)
    r.add_argument("--J", nargs="+", type=int, help="support sizes (lemma31)")
    r.add_argument("--R", type=float, help="truncation or window radius")
    r.add_argument("--eps", type=float, default=0.5)
    r.add_argument("--n-w", dest="n_w", type=int, default=21)
    r.add_argument("--rho", type=float, default=1.0)
    r.add_argument("--depth", type=int, default=3)
    r.add_argument("--csv", metavar="PATH")
    common(r)
    r.set_defaults(func=cmd_refine)

    w = sub.add_parser("pwdb", help="compare worst-case primal and best-case dual of a robust program")
    w.add_argument("path")
    w.add_argument("--csv", metavar="PATH")
    common(w)
    w.set_defaults(func=cmd_pwdb)

    u = sub.add_parser("suite", help="run the acceptance checks")
    u.add_argument("--only", nargs="+", metavar="NAME")
    common(u)
    u.set_defaults(func=cmd_suite)

    g = sub.add_parser("gen", help="write a generator's instance file")
    g.add_argument("kind")
    g.add_argument("output")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    common(g)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    report = RunReport(command=["pdlab", *argv], seed=args.seed)
    t0 = time.perf_counter()
    try:
        code = args.func(args, report)
    except (InputError, inst.InstanceError, OSError, cm.CmError, rb.RobustError,
            MeasureError, ConjugateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except (LpError, QcpError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    report.wall_time = time.perf_counter() - t0
    report.exit_code = code
    if args.json:
        try:
            Path(args.json).write_text(json.dumps(report.as_dict(), indent=1) + "\n")
        except OSError as exc:
            print(f"error: cannot write report: {exc}", file=sys.stderr)
            return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
