"""Refinement tables for every generator family, one CSV per family.

    python3 scripts/run_refinement.py --out results/
"""

import argparse
import csv
from pathlib import Path

from pdlab import cm_wasserstein as cm
from pdlab import instances as inst

FAMILIES = {
    "example32": (lambda n: inst.example32(0.5, n), [4, 8, 16, 32, 64]),
    "example32-mod": (lambda n: inst.example32(0.5, n, extend=True), [4, 8, 16, 32, 64, 128, 256]),
    "lemma31": (lambda J: inst.lemma31(J, 10.0, 21), [8, 16, 32, 64]),
    "example35": (lambda n: inst.example35(n), [16, 64, 256]),
    "fat-cantor": (lambda n: inst.fat_cantor(3, n), [64, 128, 256]),
    "example33": (lambda n: inst.example33(100.0, n), [50, 100, 200, 400]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--only", nargs="+", choices=sorted(FAMILIES))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.only or FAMILIES:
        make, sizes = FAMILIES[name]
        rows = cm.refinement_study(make, sizes)
        path = args.out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].as_dict()))
            w.writeheader()
            w.writerows(r.as_dict() for r in rows)
        print(f"{name:<14} exponent {cm.blowup_exponent(rows):6.3f}  -> {path}")


if __name__ == "__main__":
    main()
