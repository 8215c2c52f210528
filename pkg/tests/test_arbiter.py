import random

import pytest

from safecomp.arbiter import (
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
from safecomp.certificate import (
    CertChain,
    chain_extend,
    dump_projection,
    fingerprint,
    make_projection,
    make_verification_proof,
)
from safecomp.errors import (
    BlobUnavailable,
    DuplicateProof,
    IndexOutOfRange,
    InsufficientFunds,
    InvalidTransaction,
    NotSolver,
    PayloadTooLarge,
    ReplayDivergence,
    TooEarly,
    TooLate,
    UnknownRequest,
    UnknownTask,
    WrongDeposit,
    WrongStatus,
)
from safecomp.iterative import audit_run, run_to_fixpoint
from safecomp.storage import BlobStore
from safecomp.tasks import FactorialState, default_registry

OWNER, SOLVER, A1, A2, A3 = 99, 1, 2, 3, 4
T = 100


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture
def fact(registry):
    return registry.by_name("factorial")


def new_arbiter(registry, **cfg):
    balances = {who: 1000 for who in (OWNER, SOLVER, A1, A2, A3)}
    return Arbiter(registry, ArbiterConfig(**cfg), BlobStore(), balances)


def publish(arb, task, d, reward=100):
    rc = arb.submit(OWNER, PublishTask(task.task_id, d, reward)).raise_for_error()
    return rc.outcome[1]


def solution(req, run, cp=None, sender_deposit=10):
    return SubmitSolution(req, run.r_n, run.c_n, cp if cp is not None else dump_projection(run.cp),
                          run.hc, sender_deposit)


def faulty_run(task, d, k, bump=1):
    """Chain that is honest up to step k, then hashes a wrong state at step k."""
    honest = run_to_fixpoint(task, d, 1000)
    states = list(honest.states)
    states[k] = FactorialState(states[k].n, states[k].acc + bump)
    for j in range(k + 1, len(states)):
        states[j] = task.step(states[j - 1])
    c = honest.chain.c0
    entries = []
    for x in states[:-1]:
        c = chain_extend(x, c)
        entries.append(c)
    chain = CertChain(honest.chain.c0, tuple(entries))
    s, hc = fingerprint(chain)
    return states[-1], chain, s, hc


def submit_faulty(arb, req, task, d, k):
    r_n, chain, s, hc = faulty_run(task, d, k)
    cp = dump_projection(make_projection(chain))
    rc = arb.submit(SOLVER, SubmitSolution(req, r_n, chain.last, cp, hc, 10))
    assert rc.outcome == ("accepted", 1)
    return make_projection(chain), hc, (r_n, chain.last)


# -- publish ----------------------------------------------------------------

def test_publish(registry, fact):
    arb = new_arbiter(registry)
    req = publish(arb, fact, FactorialState(6, 1))
    view = arb.query_request(req)
    assert view["status"] == "published"
    assert arb.requests[req].solver == 0 and "r" not in view
    assert arb.ledger.balances[OWNER] == 900


def test_publish_oversized_input(registry, fact):
    arb = new_arbiter(registry, t_max=200)
    total = arb.total_currency()
    rc = arb.submit(OWNER, PublishTask(fact.task_id, FactorialState(10, 10**600), 100))
    assert isinstance(rc.error, PayloadTooLarge)
    assert arb.requests == {} and arb.total_currency() == total
    assert arb.ledger.balances[OWNER] == 1000


def test_publish_unknown_task(registry):
    arb = new_arbiter(registry)
    rc = arb.submit(OWNER, PublishTask(b"\x01" * 32, 1, 100))
    assert isinstance(rc.error, UnknownTask)


def test_republish_is_independent(registry, fact):
    arb = new_arbiter(registry)
    a = publish(arb, fact, FactorialState(6, 1))
    b = publish(arb, fact, FactorialState(6, 1))
    assert a != b
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    arb.submit(SOLVER, solution(a, run)).raise_for_error()
    assert arb.query_request(a)["status"] == "completed"
    assert arb.query_request(b)["status"] == "published"


def test_sender_zero_and_funds(registry, fact):
    arb = new_arbiter(registry)
    assert isinstance(arb.submit(0, PublishTask(fact.task_id, 1, 1)).error, InvalidTransaction)
    assert isinstance(arb.submit(OWNER, PublishTask(fact.task_id, 1, 5000)).error, InsufficientFunds)


# -- submit ------------------------------------------------------------------

def test_honest_solution_accepted(registry, fact):
    arb = new_arbiter(registry)
    req = publish(arb, fact, FactorialState(6, 1))
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    rc = arb.submit(SOLVER, solution(req, run))
    assert rc.outcome == ("accepted", 1) and rc.f_applications == 1
    view = arb.query_request(req)
    assert view["status"] == "completed" and view["r"] == FactorialState(0, 720)
    assert view["deadline"] == T and view["n"] == 6
    assert view["cp_ref"] == dump_projection(run.cp)


def test_non_fixpoint_rejected(registry, fact):
    arb = new_arbiter(registry)
    req = publish(arb, fact, FactorialState(6, 1))
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    bad = SubmitSolution(req, FactorialState(1, 720), run.c_n, dump_projection(run.cp), run.hc, 10)
    rc = arb.submit(SOLVER, bad)
    assert rc.outcome == ("rejected", "not-a-fixpoint")
    assert SOLVER in arb.requests[req].L
    assert arb.ledger.balances[SOLVER] == 990
    assert arb.query_request(req)["status"] == "published"


def test_submit_to_completed_request(registry, fact):
    arb = new_arbiter(registry)
    req = publish(arb, fact, FactorialState(6, 1))
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    arb.submit(SOLVER, solution(req, run)).raise_for_error()
    before = arb.total_currency(), dict(arb.ledger.balances)
    rc = arb.submit(A1, solution(req, run))
    assert isinstance(rc.error, WrongStatus)
    assert (arb.total_currency(), dict(arb.ledger.balances)) == before


def test_submit_checks(registry, fact):
    arb = new_arbiter(registry, t_max=400)
    req = publish(arb, fact, FactorialState(6, 1))
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    assert isinstance(arb.submit(SOLVER, solution(req, run, sender_deposit=3)).error, WrongDeposit)
    assert isinstance(arb.submit(SOLVER, solution(req + 5, run)).error, UnknownRequest)
    big = run_to_fixpoint(fact, FactorialState(300, 1), 1000)
    req2 = publish(arb, fact, FactorialState(300, 1))
    assert isinstance(arb.submit(SOLVER, solution(req2, big)).error, PayloadTooLarge)
    rc = arb.submit(SOLVER, solution(req, run, cp=b"garbage"))
    assert isinstance(rc.error, InvalidTransaction)


def test_external_cp_and_outage(registry, fact):
    arb = new_arbiter(registry)
    req = publish(arb, fact, FactorialState(6, 1))
    run = run_to_fixpoint(fact, FactorialState(6, 1), 100)
    ref = arb.store.put(dump_projection(run.cp))
    arb.store.set_available(ref, False)
    rc = arb.submit(SOLVER, solution(req, run, cp=ref))
    assert isinstance(rc.error, BlobUnavailable)
    assert arb.query_request(req)["status"] == "published"
    arb.store.set_available(ref, True)
    assert arb.submit(SOLVER, solution(req, run, cp=ref)).outcome == ("accepted", 1)
    assert arb.query_request(req)["cp_ref"] == ref


# -- refute --------------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_refutation_of_corrupted_publication(registry, fact, k):
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    req = publish(arb, fact, d)
    cp, hc, pair = submit_faulty(arb, req, fact, d, k)
    verdict = audit_run(fact, d, cp, hc, 100, pair)
    rc = arb.submit(A1, Refute(req, verdict.index, verdict.r_prev, verdict.c_prev, verdict.c_cur, 5))
    assert rc.outcome[0] == "refutation-accepted"
    assert rc.f_applications <= 1
    rec = arb.requests[req]
    assert rec.status == RequestStatus.PUBLISHED and rec.solver == 0 and rec.r is None
    assert SOLVER in rec.L and A1 in rec.V


def test_refutation_at_first_step_uses_anchor(registry, fact):
    # corrupting the state after step 1 puts the divergence at position 2, index 1
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    req = publish(arb, fact, d)
    cp, hc, pair = submit_faulty(arb, req, fact, d, 1)
    verdict = audit_run(fact, d, cp, hc, 100, pair)
    assert verdict.index == 1
    forged = Refute(req, 1, FactorialState(6, 2), verdict.c_prev, verdict.c_cur, 5)
    assert arb.submit(A2, forged).outcome == ("refutation-rejected", "anchor-mismatch")
    rc = arb.submit(A1, Refute(req, 1, verdict.r_prev, verdict.c_prev, verdict.c_cur, 5))
    assert rc.outcome[0] == "refutation-accepted"


def test_random_refutations_against_honest_publication(registry, fact):
    d = FactorialState(12, 1)
    arb = new_arbiter(registry)
    arb.ledger.balances[A1] = 10**6
    req = publish(arb, fact, d)
    run = run_to_fixpoint(fact, d, 100)
    arb.submit(SOLVER, solution(req, run)).raise_for_error()
    rng = random.Random(0)
    outcomes = []
    for _ in range(10_000):
        i = rng.randint(0, run.n)
        x = FactorialState(rng.randint(0, 12), rng.randint(1, 10**6))
        rc = arb.submit(A1, Refute(req, i, x, rng.randbytes(32), rng.randbytes(32), 5))
        assert rc.f_applications <= 1
        outcomes.append(rc.outcome[0])
    assert outcomes.count("refutation-accepted") == 0
    assert arb.query_request(req)["status"] == "completed"


def test_refute_guards(registry, fact):
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    req = publish(arb, fact, d)
    assert isinstance(arb.submit(A1, Refute(req, 1, d, bytes(32), bytes(32), 5)).error, WrongStatus)
    run = run_to_fixpoint(fact, d, 100)
    arb.submit(SOLVER, solution(req, run)).raise_for_error()
    assert isinstance(arb.submit(A1, Refute(req, 7, d, bytes(32), bytes(32), 5)).error, IndexOutOfRange)
    arb.tick(T)
    assert isinstance(arb.submit(A1, Refute(req, 1, d, bytes(32), bytes(32), 5)).error, TooLate)


def test_refute_with_unavailable_cp_succeeds(registry, fact):
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    req = publish(arb, fact, d)
    run = run_to_fixpoint(fact, d, 100)
    ref = arb.store.put(dump_projection(run.cp))
    arb.submit(SOLVER, solution(req, run, cp=ref)).raise_for_error()
    arb.store.set_outage(True)
    rc = arb.submit(A1, Refute(req, 0, d, bytes(32), bytes(32), 5))
    assert rc.outcome == ("refutation-accepted", "projection-unavailable")


def test_wrong_final_pair_refuted_at_last_index(registry, fact):
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    req = publish(arb, fact, d)
    run = run_to_fixpoint(fact, d, 100)
    # a fixpoint with the honest certificate but the wrong answer
    arb.submit(SOLVER, SubmitSolution(req, FactorialState(0, 721), run.c_n, dump_projection(run.cp),
                                      run.hc, 10)).raise_for_error()
    v = audit_run(fact, d, run.cp, run.hc, 100, (FactorialState(0, 721), run.c_n))
    assert v.index == run.n
    rc = arb.submit(A1, Refute(req, v.index, v.r_prev, v.c_prev, v.c_cur, 5))
    assert rc.outcome == ("refutation-accepted", "final-pair")


# -- proofs and reveal ----------------------------------------------------------

def _completed(registry, fact, d=FactorialState(6, 1), **cfg):
    arb = new_arbiter(registry, **cfg)
    req = publish(arb, fact, d)
    run = run_to_fixpoint(fact, d, 100)
    arb.submit(SOLVER, solution(req, run)).raise_for_error()
    return arb, req, run


def test_proofs(registry, fact):
    arb, req, run = _completed(registry, fact)
    prf = make_verification_proof(run.secret, A1).prf
    assert arb.submit(A1, SubmitProof(req, prf, 1)).outcome == ("proof-recorded", 1)
    assert isinstance(arb.submit(A1, SubmitProof(req, prf, 1)).error, DuplicateProof)
    arb.tick(T)
    arb.submit(SOLVER, RevealSecret(req, run.secret)).raise_for_error()
    rc = arb.submit(A2, SubmitProof(req, make_verification_proof(run.secret, A2).prf, 1))
    assert isinstance(rc.error, WrongStatus)


def test_honest_reveal_and_output(registry, fact):
    arb, req, run = _completed(registry, fact)
    for a in (A1, A2):
        arb.submit(a, SubmitProof(req, make_verification_proof(run.secret, a).prf, 1)).raise_for_error()
    arb.tick(T)
    rc = arb.submit(SOLVER, RevealSecret(req, run.secret))
    assert rc.outcome == ("verified", (A1, A2), ())
    assert arb.output(req) == (FactorialState(0, 720), run.secret, SOLVER, (A1, A2), ())
    view = arb.query_request(req)
    assert view["status"] == "verified" and view["s"] == run.secret


def test_reveal_timing(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.tick(T - 1)
    rc = arb.submit(SOLVER, RevealSecret(req, run.secret))
    assert isinstance(rc.error, TooEarly)
    assert arb.query_request(req)["status"] == "completed"
    arb.tick(1)
    assert arb.submit(SOLVER, RevealSecret(req, run.secret)).outcome[0] == "verified"


def test_reveal_by_other_party(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.tick(T)
    assert isinstance(arb.submit(A1, RevealSecret(req, run.secret)).error, NotSolver)


def test_wrong_secret_reopens(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.tick(T)
    assert arb.submit(SOLVER, RevealSecret(req, b"\x00" * 32)).outcome == ("reveal-failed",)
    rec = arb.requests[req]
    assert rec.status == RequestStatus.PUBLISHED and SOLVER in rec.L


def test_bad_proof_goes_to_L(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.submit(A1, SubmitProof(req, make_verification_proof(run.secret, A1).prf, 1)).raise_for_error()
    arb.submit(A2, SubmitProof(req, make_verification_proof(run.hc, A2).prf, 1)).raise_for_error()
    arb.tick(T)
    assert arb.submit(SOLVER, RevealSecret(req, run.secret)).outcome == ("verified", (A1,), (A2,))
    pay = arb.payout(req)
    assert A2 not in pay.transfers
    assert arb.ledger.balances[A2] == 999


def test_expire(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.tick(T)
    assert isinstance(arb.submit(A1, ExpireReveal(req)).error, TooEarly)
    arb.tick(1)
    assert arb.submit(A1, ExpireReveal(req)).outcome == ("expired",)
    rec = arb.requests[req]
    assert rec.status == RequestStatus.PUBLISHED and SOLVER in rec.L


# -- payout ---------------------------------------------------------------------

def test_payout_two_auditors_pool(registry, fact):
    arb, req, run = _completed(registry, fact)
    total = arb.total_currency()
    for a in (A1, A2):
        arb.submit(a, SubmitProof(req, make_verification_proof(run.secret, a).prf, 1)).raise_for_error()
    arb.tick(T)
    arb.submit(SOLVER, RevealSecret(req, run.secret)).raise_for_error()
    pay = arb.payout(req)
    assert pay.pool == 100 + 10 + 0 * 5 + 2 * 1 == 112
    assert (pay.m, pay.n, pay.forfeited) == (0, 2, 0)
    # refunds 10/1/1, solver share 50, the other 50 split between the auditors
    assert pay.transfers == {SOLVER: 60, A1: 26, A2: 26}
    assert sum(pay.transfers.values()) == pay.pool + pay.forfeited
    assert arb.total_currency() == total
    assert arb.ledger.balances[OWNER] == 900


def test_payout_zero_auditors(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.tick(T)
    arb.submit(SOLVER, RevealSecret(req, run.secret)).raise_for_error()
    pay = arb.payout(req)
    assert pay.transfers == {SOLVER: 110}
    assert arb.ledger.balances[SOLVER] == 1100
    assert arb.total_currency() == sum(arb.initial_balances.values())


def test_payout_after_refuted_round(registry, fact):
    d = FactorialState(6, 1)
    arb = new_arbiter(registry)
    total = arb.total_currency()
    req = publish(arb, fact, d)
    cp, hc, pair = submit_faulty(arb, req, fact, d, 3)
    v = audit_run(fact, d, cp, hc, 100, pair)
    arb.submit(A1, Refute(req, v.index, v.r_prev, v.c_prev, v.c_cur, 5)).raise_for_error()
    run = run_to_fixpoint(fact, d, 100)
    arb.submit(A2, solution(req, run)).raise_for_error()
    assert arb.query_request(req)["round"] == 2
    arb.tick(arb.requests[req].deadline - arb.now)
    arb.submit(A2, RevealSecret(req, run.secret)).raise_for_error()
    pay = arb.payout(req)
    assert (pay.m, pay.forfeited) == (1, 10)
    assert pay.pool == 100 + 10 + 1 * 5
    assert sum(pay.transfers.values()) == pay.pool + pay.forfeited
    assert SOLVER not in pay.transfers
    # reward 100 + forfeited 10: A2 (solver) 10 refund + 50 share, A1 5 refund + 60 split
    assert pay.transfers == {A1: 65, A2: 60}
    assert arb.total_currency() == total
    assert isinstance(arb.submit(OWNER, RevealSecret(req, run.secret)).error, WrongStatus)


def test_payout_requires_verified(registry, fact):
    arb, req, _ = _completed(registry, fact)
    with pytest.raises(WrongStatus):
        arb.payout(req)
    with pytest.raises(WrongStatus):
        arb.output(req)


# -- clock, atomicity, replay ------------------------------------------------------

def test_tick_is_monotone(registry):
    arb = new_arbiter(registry)
    assert arb.tick(3) == 3 and arb.tick(0) == 3
    with pytest.raises(ValueError):
        arb.tick(-1)


def test_failed_transactions_change_nothing(registry, fact):
    arb, req, run = _completed(registry, fact)
    snapshot = (dict(arb.ledger.balances), arb.total_currency(), arb.query_request(req))
    for body in (SubmitProof(req, bytes(32), 7), RevealSecret(req, run.secret),
                 Refute(req, 99, None, bytes(32), bytes(32), 5), ExpireReveal(req)):
        assert not arb.submit(A1, body).ok
        assert (dict(arb.ledger.balances), arb.total_currency(), arb.query_request(req)) == snapshot


def test_replay_reproduces_state(registry, fact):
    arb, req, run = _completed(registry, fact)
    arb.submit(A1, SubmitProof(req, make_verification_proof(run.secret, A1).prf, 1))
    arb.submit(A1, SubmitProof(req, bytes(32), 1))  # duplicate: logged as an error outcome
    arb.tick(T)
    arb.submit(SOLVER, RevealSecret(req, run.secret))
    again = replay(arb.log_bytes(), registry, arb.config, arb.store, arb.initial_balances)
    assert again.log_bytes() == arb.log_bytes()
    assert dict(again.ledger.balances) == dict(arb.ledger.balances)
    assert again.output(req) == arb.output(req)


def test_replay_detects_tampering(registry, fact):
    arb, req, run = _completed(registry, fact)
    # against a different starting balance the logged outcomes no longer hold
    with pytest.raises(ReplayDivergence):
        replay(arb.log_bytes(), registry, arb.config, arb.store, {OWNER: 0})
