"""Walk through one dispute by hand: a solver cheats, an auditor catches it.

Run with ``python demos/refutation_walkthrough.py``.
"""
import random

from safecomp.agents_sim import corrupt_publication
from safecomp.arbiter import Arbiter, ArbiterConfig, PublishTask, Refute, RevealSecret, SubmitSolution
from safecomp.certificate import dump_projection
from safecomp.iterative import audit_run, run_to_fixpoint
from safecomp.tasks import FactorialState, default_registry

OWNER, CHEAT, AUDITOR = 99, 1, 2


def show(label, receipt):
    print(f"  t={receipt.tick:<3} {label:<28} -> {receipt.outcome}  (F applied {receipt.f_applications}x)")


def main():
    registry = default_registry()
    task = registry.by_name("factorial")
    d = FactorialState(10, 1)
    arb = Arbiter(registry, ArbiterConfig(verification_period=20),
                  balances={OWNER: 1000, CHEAT: 100, AUDITOR: 100})

    print("owner publishes factorial(10)")
    req = arb.submit(OWNER, PublishTask(task.task_id, d, 100)).outcome[1]

    honest = run_to_fixpoint(task, d, 1000)
    forged = corrupt_publication(task, honest, 4, "flip-result", random.Random(7))
    print(f"cheater claims acc={forged.r_n.acc} (true value {honest.r_n.acc})")
    cp = forged.projection(arb.config.p)
    show("submit forged solution", arb.submit(CHEAT, SubmitSolution(
        req, forged.r_n, forged.c_n, dump_projection(cp), forged.hc, 10)))

    verdict = audit_run(task, d, cp, forged.hc, 1000, (forged.r_n, forged.c_n), local=honest)
    print(f"auditor recomputes: first divergence at entry {verdict.divergence}, refuting at index {verdict.index}")
    show("refute", arb.submit(AUDITOR, Refute(
        req, verdict.index, verdict.r_prev, verdict.c_prev, verdict.c_cur, 5)))

    print("auditor now solves honestly")
    show("submit honest solution", arb.submit(AUDITOR, SubmitSolution(
        req, honest.r_n, honest.c_n, dump_projection(honest.cp), honest.hc, 10)))
    arb.tick(arb.config.verification_period)
    show("reveal secret", arb.submit(AUDITOR, RevealSecret(req, honest.secret)))

    r, s, solver, V, L = arb.output(req)
    print(f"verified: r={r}, solver={solver}, V={V}, L={L}")
    print(f"payout: {arb.payout(req).transfers}")
    print(f"balances: {dict(arb.ledger.balances)}; total conserved: {arb.total_currency() == 1200}")
    print(f"arbiter F applications in total: {arb.f_applications} (the run itself took {honest.n} steps)")


if __name__ == "__main__":
    main()
