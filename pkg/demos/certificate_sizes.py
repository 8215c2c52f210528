"""Certificate size versus iteration count for a few tasks.

Each certificate entry is one SHA-256 digest, so C_f = 32 * n bytes; the
last two rows apply the same law to larger iteration counts without running anything.
"""
import random

from safecomp.certificate import certificate_size
from safecomp.iterative import run_to_fixpoint
from safecomp.tasks import CnfFormula, FactorialState, default_registry, dpll_budget, random_cnf


def main():
    reg = default_registry()
    rows = []
    for N in (10, 100, 1000):
        run = run_to_fixpoint(reg.by_name("factorial"), FactorialState(N, 1), 10_000)
        rows.append((f"factorial {N}", run.n, run.certificate_bytes, run.d_0, run.d_max))
    rng = random.Random(1)
    for nv in (8, 12):
        f = random_cnf(rng, nv, int(4.3 * nv))
        run = run_to_fixpoint(reg.by_name("dpll"), f, dpll_budget(f))
        rows.append((f"dpll 3-CNF, {nv} vars", run.n, run.certificate_bytes, run.d_0, run.d_max))
    unsat = CnfFormula(2, ((1, 2), (1, -2), (-1, 2), (-1, -2)))
    run = run_to_fixpoint(reg.by_name("dpll"), unsat, dpll_budget(unsat))
    rows.append(("dpll 2-var UNSAT", run.n, run.certificate_bytes, run.d_0, run.d_max))

    print(f"{'task':<24}{'n':>8}{'C_f bytes':>12}{'d_0':>8}{'d_max':>8}")
    for name, n, cf, d0, dmax in rows:
        print(f"{name:<24}{n:>8}{cf:>12}{d0:>8}{dmax:>8}")
    for n in (1656, 410802):
        print(f"{'table row, n=' + str(n):<24}{n:>8}{certificate_size(n):>12}")


if __name__ == "__main__":
    main()
