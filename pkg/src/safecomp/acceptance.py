"""Executable acceptance checks, shared by the test suite and ``safecomp paper-check``.

Each ``criterion_N`` returns a ``CriterionResult``; failures carry enough
detail to diagnose without rerunning. Randomized checks use fixed seeds.
"""
from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agents_sim import AgentSpec, Scenario, corrupt_publication, run_scenario
from .arbiter import (
    Arbiter,
    ArbiterConfig,
    ExpireReveal,
    PublishTask,
    Refute,
    RequestStatus,
    RevealSecret,
    SubmitProof,
    SubmitSolution,
    replay,
)
from .certificate import (
    certificate_size,
    chain_extend,
    dump_chain,
    dump_projection,
    load_projection,
    make_verification_proof,
)
from .hashing import DIGEST_SIZE, encode
from .iterative import Disagree, audit_run, run_to_fixpoint
from .tasks import (
    REFERENCE_POOL,
    CnfFormula,
    FactorialState,
    binary_successor_machine,
    brute_force_sat,
    default_registry,
    dpll_budget,
    dpll_task,
    dpll_verdict,
    factorial_task,
    increment_machine,
    random_cnf,
    tm_task,
    trivial_lift,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: Optional[float] = None

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        budget = f" (limit {self.limit:g}s)" if self.limit else ""
        return f"[{verdict}] {self.number}. {self.name}: {self.detail} [{self.seconds:.2f}s{budget}]"


@dataclass
class _Check:
    failures: list = field(default_factory=list)

    def expect(self, cond: bool, msg: str) -> None:
        if not cond:
            self.failures.append(msg)

    def summary(self, ok_detail: str) -> tuple[bool, str]:
        if not self.failures:
            return True, ok_detail
        shown = "; ".join(self.failures[:3])
        more = f" (+{len(self.failures) - 3} more)" if len(self.failures) > 3 else ""
        return False, shown + more


def _timed(number: int, name: str, limit: Optional[float], body: Callable[[], tuple[bool, str]]):
    t0 = time.perf_counter()
    passed, detail = body()
    dt = time.perf_counter() - t0
    if limit is not None and dt > limit:
        passed = False
        detail += f"; took {dt:.2f}s, over the {limit:g}s budget"
    return CriterionResult(number, name, passed, detail, dt, limit)


# -- 1 ------------------------------------------------------------------------

def criterion_1() -> CriterionResult:
    def body():
        chk = _Check()
        chk.expect(certificate_size(1656) == 52992, "n=1656 does not give 52992 bytes")
        chk.expect(certificate_size(410802) == 13145664, "n=410802 does not give 13145664 bytes")
        task = factorial_task()
        runs = []
        for N in (10, 1000):
            run = run_to_fixpoint(task, FactorialState(N, 1), 10 * N + 10)
            chk.expect(run.n == N, f"factorial {N}: n={run.n}")
            runs.append(run)
        rng = random.Random(1)
        dpll = dpll_task()
        for _ in range(5):
            f = random_cnf(rng, 8, 30)
            runs.append(run_to_fixpoint(dpll, f, dpll_budget(f)))
        for run in runs:
            chk.expect(run.certificate_bytes == 32 * run.n, f"C_f={run.certificate_bytes} for n={run.n}")
            # the serialized chain is header + c_0 + exactly 32 bytes per step
            chk.expect(len(dump_chain(run.chain)) == 8 + 32 + 32 * run.n, "SCC1 length off")
        return chk.summary(f"32*n holds for {len(runs)} runs and both table rows")
    return _timed(1, "certificate size law", 5, body)


# -- 2 ------------------------------------------------------------------------

def criterion_2() -> CriterionResult:
    def body():
        chk = _Check()
        rng = random.Random(2)
        names = sorted(REFERENCE_POOL)
        for _ in range(100):
            name = rng.choice(names)
            d = rng.randrange(0, 200)
            task = trivial_lift(name)
            run = run_to_fixpoint(task, task.inj(d), 10)
            got, want = task.proj(run.r_n), REFERENCE_POOL[name](d)
            chk.expect(got == want and run.n == 1, f"trivial {name}({d}) -> {got}, expected {want}")
        for M in (increment_machine(), binary_successor_machine()):
            task = tm_task(M)
            for d in range(21):
                run = run_to_fixpoint(task, task.inj(d), 10_000)
                got = task.proj(run.r_n)
                chk.expect(got == d + 1, f"{M.name}({d}) -> {got}")
        return chk.summary("100 trivial lifts and 2 machines x 21 inputs agree with C(d)")
    return _timed(2, "fixpoint construction realization", 10, body)


# -- 3 ------------------------------------------------------------------------

def two_variable_universe() -> list[CnfFormula]:
    """Every formula over variables 1, 2 whose clauses are distinct non-empty literal sets."""
    lits = (1, -1, 2, -2)
    clauses = [c for r in range(1, 5) for c in itertools.combinations(lits, r)]
    return [CnfFormula(2, chosen) for r in range(len(clauses) + 1)
            for chosen in itertools.combinations(clauses, r)]


def _dpll_agrees(task, f: CnfFormula, chk: _Check) -> None:
    run = run_to_fixpoint(task, f, dpll_budget(f))
    v = dpll_verdict(run.r_n)
    want = brute_force_sat(f).satisfiable
    chk.expect(v.satisfiable == want, f"verdict mismatch on {f.clauses}")
    if v.satisfiable:
        chk.expect(f.satisfied_by(v.model), f"bad witness for {f.clauses}")


def criterion_3() -> CriterionResult:
    def body():
        chk = _Check()
        task = dpll_task()
        universe = two_variable_universe()
        for f in universe:
            _dpll_agrees(task, f, chk)
        rng = random.Random(3)
        for _ in range(200):
            v = rng.randint(1, 12)
            f = random_cnf(rng, v, rng.randint(1, 5 * v))
            _dpll_agrees(task, f, chk)
        return chk.summary(f"{len(universe)} two-variable formulas and 200 random 3-CNFs agree")
    return _timed(3, "DPLL / brute-force equivalence", 60, body)


# -- 4 ------------------------------------------------------------------------

SMALL_UNSAT = CnfFormula(2, ((1, 2), (1, -2), (-1, 2), (-1, -2)))


def honest_scenario(task: str, d, seed: int = 0) -> Scenario:
    return Scenario(task, d, [
        AgentSpec(1, "honest-solver"),
        AgentSpec(2, "honest-auditor", compute_delay=1),
        AgentSpec(3, "honest-auditor", compute_delay=2),
    ], seed=seed)


def criterion_4() -> CriterionResult:
    def body():
        chk = _Check()
        for task, d, want_r in (("factorial", FactorialState(6, 1), FactorialState(0, 720)),
                                ("dpll", SMALL_UNSAT, None)):
            rep = run_scenario(honest_scenario(task, d))
            chk.expect(rep.status == "verified", f"{task}: status {rep.status}")
            if rep.output is None:
                continue
            r, s, solver, V, L = rep.output
            if want_r is not None:
                chk.expect(r == want_r, f"{task}: r={r}")
            else:
                chk.expect(dpll_verdict(r).satisfiable is False, f"{task}: verdict not UNSAT")
            chk.expect(rep.result_matches_reference is True, f"{task}: result differs from reference")
            chk.expect(solver == 1 and V == (2, 3) and L == () and len(s) == DIGEST_SIZE,
                       f"{task}: output tuple solver={solver} V={V} L={L}")
        return chk.summary("factorial {6,1} -> {0,720} and UNSAT CNF verified, V={2,3}, L={}")
    return _timed(4, "honest end-to-end", 10, body)


# -- 5 ------------------------------------------------------------------------

def _honest_completed(task, d, n_parties: int = 3, balance: int = 10**9):
    """An arbiter holding an accepted honest publication of ``task`` on ``d``."""
    reg = default_registry()
    arb = Arbiter(reg, ArbiterConfig(), balances={i: balance for i in range(1, n_parties + 1)})
    run = run_to_fixpoint(task, d, 100_000)
    req = arb.submit(1, PublishTask(task.task_id, d, 100)).raise_for_error().outcome[1]
    arb.submit(2, SubmitSolution(req, run.r_n, run.c_n, dump_projection(run.cp), run.hc,
                                 arb.config.solver_deposit)).raise_for_error()
    return arb, req, run


def refutation_attack(rng: random.Random, task, run, req: int, p: int, deposit: int) -> Refute:
    """A random refutation against an honest publication; strategies vary per call."""
    n = run.n
    i = rng.randint(0, n)
    states, cp = run.states, run.cp
    strategy = rng.randrange(4)
    rand_digest = lambda: rng.randbytes(DIGEST_SIZE)  # noqa: E731
    if strategy == 0:  # pure noise
        return Refute(req, i, states[max(i - 1, 0)], rand_digest(), rand_digest(), deposit)
    if strategy == 1:  # the true payload, which cannot show a divergence
        if i == 0:
            return Refute(req, 0, states[0], run.chain.c0, run.chain.c0, deposit)
        return Refute(req, i, states[i - 1], run.chain.at(i - 1), run.chain.at(i), deposit)
    i = max(i, 2) if n >= 2 else i
    # projection-matched anchor: a fresh digest whose leading p bits equal cp[i-1]
    if i >= 2:
        nbytes = (p + 7) // 8
        head = (cp.at(i - 1) << (8 * nbytes - p)) | rng.getrandbits(8 * nbytes - p)
        c_prev = head.to_bytes(nbytes, "big") + rng.randbytes(DIGEST_SIZE - nbytes)
    else:
        c_prev = rand_digest()
    x_prev = states[i - 1] if i >= 1 else states[0]
    if strategy == 3 and task.mutate is not None:
        x_prev = task.mutate(x_prev, rng)
    try:
        c_cur = chain_extend(x_prev, c_prev)
    except Exception:
        c_cur = rand_digest()
    return Refute(req, i, x_prev, c_prev, c_cur, deposit)


def criterion_5(trials: int = 50, attacks: int = 10_000) -> CriterionResult:
    def body():
        chk = _Check()
        rng = random.Random(5)
        accepted = 0
        for t in range(trials):
            N = rng.randint(2, 25)
            mode = rng.choice(("flip-result", "flip-cert-entry"))
            k = rng.randint(1, N)
            sc = Scenario("factorial", FactorialState(N, 1), [
                AgentSpec(1, "faulty-solver", corrupt_step=k, mode=mode),
                AgentSpec(2, "honest-auditor", compute_delay=rng.randint(0, 3)),
            ], seed=t)
            rep = run_scenario(sc)
            refutes = [r for r in rep.receipts if r.kind == "Refute"]
            ok = [r for r in refutes if r.outcome[0] == "refutation-accepted"]
            if ok:
                accepted += 1
            chk.expect(len(ok) == 1, f"trial {t} ({mode}, N={N}, k={k}): {len(ok)} refutations accepted")
            chk.expect(rep.output is not None and 1 in rep.output[4], f"trial {t}: faulty solver not in L")
            for r in rep.receipts:
                if r.kind in ("SubmitSolution", "Refute") and r.ok:
                    chk.expect(r.f_applications == 1, f"trial {t}: {r.kind} used {r.f_applications} F")
        # (b) random refutations against honest publications
        task = factorial_task()
        arb, req, run = _honest_completed(task, FactorialState(20, 1))
        false_accepts = 0
        for _ in range(attacks):
            tx = refutation_attack(rng, task, run, req, arb.config.p, arb.config.refute_deposit)
            rec = arb.submit(3, tx)
            if rec.outcome[0] == "refutation-accepted":
                false_accepts += 1
                arb, req, run = _honest_completed(task, FactorialState(20, 1))
            elif rec.f_applications > 1:
                chk.expect(False, "an adjudication used more than one F application")
        chk.expect(false_accepts == 0, f"{false_accepts} of {attacks} attacks on honest work accepted")
        return chk.summary(f"{accepted}/{trials} corruptions refuted with one F each; "
                           f"0/{attacks} attacks on honest work accepted")
    return _timed(5, "refutation soundness and completeness", 120, body)


# -- 6 ------------------------------------------------------------------------

def criterion_6(fakes: int = 10_000, honest: int = 5) -> CriterionResult:
    def body():
        chk = _Check()
        rng = random.Random(6)
        task = factorial_task()
        arb, req, run = _honest_completed(task, FactorialState(8, 1), n_parties=2)
        first = 3
        for k in range(fakes):
            who = first + k
            arb.ledger.balances[who] = 1
            kind = k % 3
            if kind == 0:
                prf = rng.randbytes(DIGEST_SIZE)
            elif kind == 1:  # right shape, wrong secret
                prf = make_verification_proof(rng.randbytes(DIGEST_SIZE), who).prf
            else:  # someone else's valid proof, replayed under a new id
                prf = make_verification_proof(run.secret, who + 1).prf
            arb.submit(who, SubmitProof(req, prf, 1)).raise_for_error()
        honest_ids = list(range(first + fakes, first + fakes + honest))
        for who in honest_ids:
            arb.ledger.balances[who] = 1
            arb.submit(who, SubmitProof(req, make_verification_proof(run.secret, who).prf, 1)).raise_for_error()
        arb.tick(arb.config.verification_period)
        arb.submit(2, RevealSecret(req, run.secret)).raise_for_error()
        _, _, _, V, L = arb.output(req)
        leaked = [v for v in V if v < first + fakes]
        chk.expect(not leaked, f"{len(leaked)} fake proofs entered V")
        chk.expect(set(honest_ids) <= set(V), "an honest proof was rejected")
        chk.expect(len(L) == fakes, f"{len(L)} ids in L, expected {fakes}")
        return chk.summary(f"0/{fakes} fake proofs accepted, {honest}/{honest} honest proofs in V")
    return _timed(6, "proof-of-verification gate", 60, body)


# -- 7 ------------------------------------------------------------------------

def criterion_7() -> CriterionResult:
    def body():
        chk = _Check()
        sc = Scenario("factorial", FactorialState(6, 1), [
            AgentSpec(1, "withholding-solver"),
            AgentSpec(2, "honest-auditor", compute_delay=1),
        ])
        rep = run_scenario(sc)
        T = sc.config.verification_period
        accepted = [r for r in rep.receipts if r.kind == "SubmitSolution" and r.outcome[0] == "accepted"]
        expired = [r for r in rep.receipts if r.kind == "ExpireReveal" and r.outcome == ("expired",)]
        chk.expect(len(expired) == 1, f"{len(expired)} expirations")
        if accepted and expired:
            chk.expect(accepted[0].sender == 1, "withholding solver was not the first solver")
            chk.expect(expired[0].tick == accepted[0].tick + T + 1,
                       f"expired at tick {expired[0].tick}, solution accepted at {accepted[0].tick}, T={T}")
        chk.expect(not any(r.kind == "RevealSecret" and r.sender == 1 for r in rep.receipts),
                   "withholding solver revealed")
        chk.expect(rep.output is not None and 1 in rep.output[4], "withholding solver not in L")
        return chk.summary(f"request reopened right after T={T} ticks; solver in L")
    return _timed(7, "timeout path", None, body)


# -- 8 ------------------------------------------------------------------------

def fuzz_sequence(seed: int, steps: int = 150) -> tuple[list[str], Arbiter]:
    """Random mixed-validity transactions; returns invariant violations and the arbiter."""
    rng = random.Random(seed)
    reg = default_registry()
    task = factorial_task()
    cfg = ArbiterConfig(verification_period=rng.randint(2, 6), reveal_window=rng.randint(0, 2))
    parties = list(range(1, 7))
    arb = Arbiter(reg, cfg, balances={i: rng.randint(0, 200) for i in parties})
    total = arb.total_currency()
    problems = []
    runs: dict[int, object] = {}
    pubs: dict[int, object] = {}

    for _ in range(steps):
        who = rng.choice(parties)
        reqs = sorted(arb.requests)
        req = rng.choice(reqs) if reqs and rng.random() < 0.95 else rng.randint(1, 9)
        op = rng.randrange(8)
        body = None
        if op == 0 or not reqs:
            d = FactorialState(rng.randint(2, 7), 1)
            body = PublishTask(task.task_id, d, rng.choice((0, 10, 50, 100)))
        elif op == 1 and req in arb.requests:
            rec = arb.requests[req]
            run = runs.setdefault(req, run_to_fixpoint(task, rec.d, 100))
            pub = run
            if rng.random() < 0.4:
                k = rng.randint(1, run.n)
                pub = corrupt_publication(task, run, k, rng.choice(("flip-result", "flip-cert-entry",
                                                                    "wrong-fixpoint")), rng)
                cp = dump_projection(pub.projection(cfg.p))
                pubs[(req, who)] = pub
                body = SubmitSolution(req, pub.r_n, pub.c_n, cp, pub.hc, rng.choice((10, 10, 3)))
            else:
                pubs[(req, who)] = run
                body = SubmitSolution(req, run.r_n, run.c_n, dump_projection(run.cp), run.hc,
                                      rng.choice((10, 10, 3)))
        elif op == 2 and req in runs:
            run = runs[req]
            i = rng.randint(0, run.n)
            rec = arb.requests[req]
            if rec.status == RequestStatus.COMPLETED and rng.random() < 0.5:
                verdict = audit_run(task, rec.d, load_projection(rec.cp_ref), rec.hc, 100,
                                    (rec.r, rec.c_n), local=run)
                if isinstance(verdict, Disagree):
                    body = Refute(req, verdict.index, verdict.r_prev, verdict.c_prev, verdict.c_cur, 5)
            if body is not None:
                pass
            elif rng.random() < 0.5 and i >= 1:
                body = Refute(req, i, run.states[i - 1], run.chain.at(i - 1), run.chain.at(i), 5)
            else:
                body = Refute(req, i, run.states[0], rng.randbytes(32), rng.randbytes(32), 5)
        elif op == 3 and req in runs:
            secret = runs[req].secret if rng.random() < 0.6 else rng.randbytes(32)
            body = SubmitProof(req, make_verification_proof(secret, who).prf, rng.choice((1, 1, 2)))
        elif op == 4 and req in arb.requests:
            rec = arb.requests[req]
            sender = rec.solver if rec.solver and rng.random() < 0.8 else who
            pub = pubs.get((req, sender))
            s = getattr(pub, "secret", None) if pub is not None and rng.random() < 0.8 else rng.randbytes(32)
            body = RevealSecret(req, s if s is not None else rng.randbytes(32))
            who = sender
        elif op == 5:
            body = ExpireReveal(req)
        elif op == 6:
            arb.tick(rng.randint(1, 4))
            continue
        if body is None:
            continue
        arb.submit(who, body)
        now_total = arb.total_currency()
        if now_total != total:
            problems.append(f"seed {seed}: currency {total} -> {now_total} after {type(body).__name__}")
            total = now_total
        if any(v < 0 for v in arb.ledger.balances.values()):
            problems.append(f"seed {seed}: negative balance")

    for req, rec in arb.requests.items():
        if rec.status != RequestStatus.VERIFIED:
            continue
        po = rec.payout
        formula = rec.reward + cfg.solver_deposit + po.m * cfg.refute_deposit + po.n * cfg.proof_deposit
        if po.pool != formula:
            problems.append(f"seed {seed} req {req}: pool {po.pool} != {formula}")
        if sum(po.transfers.values()) != po.pool + po.forfeited:
            problems.append(f"seed {seed} req {req}: paid {sum(po.transfers.values())} "
                            f"!= pool {po.pool} + forfeited {po.forfeited}")
        for x in rec.L - {rec.owner}:
            # members of L may only get back deposits of acts that were honest
            refunds = sum(a for w, a in rec.refuter_stakes if w == x)
            refunds += rec.proof_stakes.get(x, 0)
            refunds += rec.solver_stake if x == rec.solver else 0
            if po.transfers.get(x, 0) > refunds:
                problems.append(f"seed {seed} req {req}: member {x} of L was paid a share")
    return problems, arb


def criterion_8(sequences: int = 100) -> CriterionResult:
    def body():
        chk = _Check()
        verified = with_refutations = 0
        for seed in range(sequences):
            problems, arb = fuzz_sequence(seed)
            for p in problems:
                chk.expect(False, p)
            paid = [r.payout for r in arb.requests.values() if r.status == RequestStatus.VERIFIED]
            verified += len(paid)
            with_refutations += sum(po.m > 0 for po in paid)
        chk.expect(verified > 0, "no fuzzed sequence reached a payout")
        chk.expect(with_refutations > 0, "no payout followed an accepted refutation")
        return chk.summary(f"{sequences} sequences conserve currency; {verified} payouts "
                           f"({with_refutations} with m > 0) match the pool formula")
    return _timed(8, "currency conservation", None, body)


# -- 9 ------------------------------------------------------------------------

def determinism_corpus() -> list[Scenario]:
    fs = FactorialState(9, 1)
    return [
        honest_scenario("factorial", FactorialState(6, 1), seed=11),
        Scenario("factorial", fs, [AgentSpec(1, "faulty-solver", corrupt_step=4, mode="flip-result"),
                                   AgentSpec(2, "honest-auditor"), AgentSpec(3, "lazy-auditor"),
                                   AgentSpec(4, "griefing-refuter", count=3)], seed=12),
        Scenario("factorial", fs, [AgentSpec(1, "honest-solver"), AgentSpec(2, "honest-auditor")],
                 seed=13, cp_storage="external", outages=((0, 2),)),
        Scenario("dpll", SMALL_UNSAT, [AgentSpec(1, "withholding-solver"), AgentSpec(2, "honest-auditor")],
                 seed=14),
    ]


def criterion_9() -> CriterionResult:
    def body():
        chk = _Check()
        reg = default_registry()
        for k, sc in enumerate(determinism_corpus()):
            a, b = run_scenario(sc), run_scenario(sc)
            chk.expect(a.log == b.log, f"scenario {k}: logs differ between runs")
            chk.expect(a.summary() == b.summary(), f"scenario {k}: reports differ between runs")
            if sc.outages:
                continue  # store availability is not part of the log
            balances = {x.id: x.balance for x in sc.agents}
            balances[sc.owner] = sc.owner_balance
            again = replay(a.log, reg, sc.config, balances=balances)
            chk.expect(again.log_bytes() == a.log, f"scenario {k}: replay diverged")
        return chk.summary("identical logs on rerun and on replay for every corpus scenario")
    return _timed(9, "determinism", None, body)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9)


def run_all(only: Optional[set] = None) -> list[CriterionResult]:
    return [c() for k, c in enumerate(CRITERIA, start=1) if only is None or k in only]
