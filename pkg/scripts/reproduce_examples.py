"""Print the headline numbers for each counterexample family next to their closed forms."""

import math

import numpy as np

from pdlab import cm_wasserstein as cm
from pdlab import instances as inst
from pdlab import robust as rb


def show(label, got, want):
    print(f"  {label:<34} {got: .10f}   expected {want: .10f}   |diff| {abs(got - want):.1e}")


def main():
    print("two-point template, v = (0.25, 1), g = (-2, -1)")
    x = inst.lemma34([0.25, 1.0], [-2.0, -1.0], 1.0)
    r = cm.solve_primal(x)
    show("primal", r.value, -0.75)
    show("psi(0.25)", r.cert.psi[0], 1.0)
    show("psi(1)", r.cert.psi[1], 0.5)

    print("mixing counterexample, eps = 0.5: min-norm multiplier equals n")
    for n in (4, 8, 16, 32):
        x = inst.example32(0.5, n)
        c = cm.min_norm_certificate(x)
        show(f"n = {n}", float(np.max(np.abs(c.psi))), n)

    print("extended grid: primal sqrt(eps) / (sqrt(eps) + 1/n)")
    s = math.sqrt(0.5)
    for n in (4, 16, 64, 141):
        show(f"n = {n}", cm.solve_primal(inst.example32(0.5, n, extend=True)).value, s / (s + 1 / n))

    print("inverse-sqrt template: max |psi| = sqrt(n) / 2")
    for n in (16, 64, 256):
        r = cm.solve_primal(inst.example35(n))
        show(f"n = {n}", float(np.max(np.abs(r.cert.psi))), math.sqrt(n) / 2)

    print("heavy-tail penalty: value -1/(1 + R)")
    for R in (10, 100, 1000):
        show(f"R = {R}", cm.solve_primal(inst.example33(R, 200)).value, -1 / (1 + R))

    print("fat Cantor, depth 3, n = 64: dual path toward the optimum")
    x = inst.fat_cantor(3, 64)
    p = cm.solve_primal(x).value
    for r, v in zip([1, 16, 256], cm.continuous_dual_path(x, inst.fat_cantor_intervals(3), [1, 16, 256])):
        show(f"slope {r}", v, p)

    print("robust toy LP: min x s.t. 1 - z x <= 0, z in [1, 2]")
    p = inst.toy_robust_lp()
    pw = rb.primal_worst(p)
    show("primal worst", pw.value, 1.0)
    show("dual best", rb.db_evaluate(p, rb.db_construct_from_kkt(p, pw)), 1.0)


if __name__ == "__main__":
    main()
