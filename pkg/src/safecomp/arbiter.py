"""The trusted weak computing device: a sequential transaction processor.

Every transaction is atomic. Refusals (``ArbiterError`` subclasses) leave the
state untouched apart from the log entry; adjudicated outcomes such as a
rejected solution or a failed refutation do change state (the sender joins
``L`` and forfeits its deposit). Adjudicating one transaction applies the
lifted step at most once; ``f_applications`` counts this.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Union

from .certificate import (
    VerificationProof,
    chain_init,
    check_verification_proof,
    projection_entry,
    projection_header,
)
from .errors import (
    ArbiterError,
    BlobUnavailable,
    DuplicateProof,
    IndexOutOfRange,
    InsufficientFunds,
    InvalidTransaction,
    MalformedFile,
    MalformedProjection,
    NotSolver,
    PayloadTooLarge,
    ReplayDivergence,
    TooEarly,
    TooLate,
    Unavailable,
    UnknownRequest,
    WrongDeposit,
    WrongStatus,
)
from .hashing import DEFAULT_P, DIGEST_SIZE, Digest, combine, decode_stream, encode, hash_H, project, register_record
from .iterative import AugmentedState, TaskProgram, lift
from .storage import BlobRef, BlobStore, oracle_fetch_projection


class RequestStatus(str, enum.Enum):
    PUBLISHED = "published"
    COMPLETED = "completed"
    VERIFIED = "verified"


@dataclass(frozen=True)
class ArbiterConfig:
    verification_period: int = 100  # T
    reveal_window: int = 0          # extra grace ticks after the deadline before anyone may expire
    t_max: int = 64 * 1024
    p: int = DEFAULT_P
    solver_deposit: int = 10        # D_s
    refute_deposit: int = 5         # D_p
    proof_deposit: int = 1          # D_w
    solver_share: Fraction = Fraction(1, 2)

    @classmethod
    def from_dict(cls, d: dict) -> "ArbiterConfig":
        d = dict(d)
        if "solver_share" in d:
            d["solver_share"] = Fraction(d["solver_share"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "verification_period": self.verification_period,
            "reveal_window": self.reveal_window,
            "t_max": self.t_max,
            "p": self.p,
            "solver_deposit": self.solver_deposit,
            "refute_deposit": self.refute_deposit,
            "proof_deposit": self.proof_deposit,
            "solver_share": str(self.solver_share),
        }


# -- transactions -------------------------------------------------------------

@register_record("safecomp.tx.PublishTask")
@dataclass(frozen=True)
class PublishTask:
    task_ref: Digest
    d: Any
    reward: int


@register_record("safecomp.tx.SubmitSolution")
@dataclass(frozen=True)
class SubmitSolution:
    req: int
    r_n: Any
    c_n: Digest
    cp: Union[bytes, BlobRef]  # inline SCP1 file or a reference into the blob store
    hc: Digest
    deposit: int


@register_record("safecomp.tx.Refute")
@dataclass(frozen=True)
class Refute:
    req: int
    i: int
    r_prev: Any
    c_prev: Digest
    c_cur: Digest
    deposit: int


@register_record("safecomp.tx.SubmitProof")
@dataclass(frozen=True)
class SubmitProof:
    req: int
    prf: Digest
    deposit: int


@register_record("safecomp.tx.RevealSecret")
@dataclass(frozen=True)
class RevealSecret:
    req: int
    s: Digest


@register_record("safecomp.tx.ExpireReveal")
@dataclass(frozen=True)
class ExpireReveal:
    req: int


TxBody = Union[PublishTask, SubmitSolution, Refute, SubmitProof, RevealSecret, ExpireReveal]


@register_record("safecomp.tx.Transaction")
@dataclass(frozen=True)
class Transaction:
    sender: int
    body: TxBody


@dataclass
class Receipt:
    tick: int
    sender: int
    body: TxBody
    outcome: tuple
    error: Optional[ArbiterError] = None
    f_applications: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def kind(self) -> str:
        return type(self.body).__name__

    def raise_for_error(self) -> "Receipt":
        if self.error is not None:
            raise self.error
        return self


@dataclass(frozen=True)
class Payout:
    pool: int          # D_r + D_s + m*D_p + n*D_w
    forfeited: int     # deposits lost by misbehaving parties, distributed with the reward
    m: int             # accepted refutations over the request's lifetime
    n: int             # valid proofs of verification
    transfers: dict


@dataclass
class RequestRecord:
    task_ref: Digest
    d: Any
    owner: int
    reward: int
    status: RequestStatus = RequestStatus.PUBLISHED
    r: Any = None
    c_n: Optional[Digest] = None
    cp_ref: Union[bytes, BlobRef, None] = None
    n: Optional[int] = None
    hc: Optional[Digest] = None
    s: Optional[Digest] = None
    solver: int = 0
    V: set = field(default_factory=set)
    L: set = field(default_factory=set)
    P: dict = field(default_factory=dict)
    deadline: Optional[int] = None
    round: int = 0
    # escrow components
    solver_stake: int = 0
    refuter_stakes: list = field(default_factory=list)
    proof_stakes: dict = field(default_factory=dict)
    forfeited: int = 0
    payout: Optional[Payout] = None

    def escrow(self) -> int:
        if self.payout is not None:
            return 0
        return (self.reward + self.solver_stake + sum(a for _, a in self.refuter_stakes)
                + sum(self.proof_stakes.values()) + self.forfeited)


class Ledger:
    def __init__(self, balances: Optional[dict] = None):
        self.balances: dict[int, int] = defaultdict(int, balances or {})

    def total(self) -> int:
        return sum(self.balances.values())

    def debit(self, who: int, amount: int) -> None:
        if self.balances[who] < amount:
            raise InsufficientFunds(f"participant {who} holds {self.balances[who]}, needs {amount}")
        self.balances[who] -= amount

    def credit(self, who: int, amount: int) -> None:
        self.balances[who] += amount


class Arbiter:
    def __init__(self, registry, config: ArbiterConfig = ArbiterConfig(),
                 store: Optional[BlobStore] = None, balances: Optional[dict] = None):
        self.registry = registry
        self.config = config
        self.store = store if store is not None else BlobStore()
        self.ledger = Ledger(balances)
        self.initial_balances = dict(balances or {})
        self.requests: dict[int, RequestRecord] = {}
        self.now = 0
        self.f_applications = 0
        self.hash_evaluations = 0
        self.receipts: list[Receipt] = []
        self._log: list[bytes] = []
        self._lifted: dict[Digest, Any] = {}

    # -- bookkeeping ----------------------------------------------------------

    def tick(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("the clock never runs backwards")
        self.now += n
        return self.now

    def total_currency(self) -> int:
        return self.ledger.total() + sum(r.escrow() for r in self.requests.values())

    def log_bytes(self) -> bytes:
        return b"".join(self._log)

    def _apply_F(self, task: TaskProgram, aug: AugmentedState) -> AugmentedState:
        self.f_applications += 1
        F = self._lifted.get(task.task_id)
        if F is None:
            F = self._lifted[task.task_id] = lift(task)
        return F(aug)

    def _H(self, b: bytes) -> Digest:
        self.hash_evaluations += 1
        return hash_H(b)

    def _req(self, req: int) -> RequestRecord:
        try:
            return self.requests[req]
        except KeyError:
            raise UnknownRequest(f"no request {req}") from None

    def _check_size(self, body) -> None:
        size = len(encode(body))
        if size > self.config.t_max:
            raise PayloadTooLarge(f"{type(body).__name__} of {size} bytes exceeds T_max={self.config.t_max}")

    def _check_deposit(self, sender: int, amount: int, required: int) -> None:
        if amount != required:
            raise WrongDeposit(f"deposit must be {required}, got {amount}")
        if self.ledger.balances[sender] < amount:
            raise InsufficientFunds(f"participant {sender} cannot cover a deposit of {amount}")

    # -- entry point ------------------------------------------------------------

    def process(self, tx: Transaction) -> Receipt:
        handler = self._handlers.get(type(tx.body))
        before = self.f_applications
        try:
            if tx.sender == 0:
                raise InvalidTransaction("sender id 0 is reserved")
            if handler is None:
                raise InvalidTransaction(f"unknown transaction kind {type(tx.body).__name__}")
            outcome, error = handler(self, tx.sender, tx.body), None
        except ArbiterError as exc:
            outcome, error = ("error", type(exc).__name__), exc
        receipt = Receipt(self.now, tx.sender, tx.body, outcome, error, self.f_applications - before)
        self.receipts.append(receipt)
        self._log.append(encode((self.now, tx.sender, tx.body, outcome)))
        return receipt

    def submit(self, sender: int, body: TxBody) -> Receipt:
        return self.process(Transaction(sender, body))

    # -- handlers -------------------------------------------------------------

    def _publish(self, sender: int, tx: PublishTask) -> tuple:
        task = self.registry.get(tx.task_ref)
        size = len(encode(task.descriptor)) + len(encode(tx.d))
        if size > self.config.t_max:
            raise PayloadTooLarge(f"task plus input is {size} bytes, T_max={self.config.t_max}")
        if tx.reward < 0:
            raise InvalidTransaction("negative reward")
        self.ledger.debit(sender, tx.reward)
        req = len(self.requests) + 1
        self.requests[req] = RequestRecord(tx.task_ref, tx.d, sender, tx.reward)
        return ("published", req)

    def _projection_meta(self, cp) -> tuple[int, int]:
        if isinstance(cp, BlobRef):
            try:
                data = self.store.get(cp)
            except Unavailable as exc:
                raise BlobUnavailable(f"solution declined: {exc}") from exc
        elif isinstance(cp, bytes):
            data = cp
        else:
            raise InvalidTransaction("cp must be an inline SCP1 file or a blob reference")
        try:
            return projection_header(data)
        except MalformedFile as exc:
            raise InvalidTransaction(f"malformed projection: {exc}") from exc

    def _submit(self, sender: int, tx: SubmitSolution) -> tuple:
        rec = self._req(tx.req)
        if rec.status != RequestStatus.PUBLISHED:
            raise WrongStatus(f"request {tx.req} is {rec.status.value}")
        self._check_size(tx)
        self._check_deposit(sender, tx.deposit, self.config.solver_deposit)
        if not (isinstance(tx.hc, bytes) and len(tx.hc) == DIGEST_SIZE
                and isinstance(tx.c_n, bytes) and len(tx.c_n) == DIGEST_SIZE):
            raise InvalidTransaction("hc and c_n must be digests")
        p, n = self._projection_meta(tx.cp)
        if p != self.config.p:
            raise InvalidTransaction(f"projection width {p}, arbiter expects {self.config.p}")

        task = self.registry.get(rec.task_ref)
        point = AugmentedState(tx.r_n, tx.c_n)
        try:
            is_fixpoint = self._apply_F(task, point) == point
        except Exception:
            # a state the step function cannot handle is not a fixpoint
            is_fixpoint = False

        self.ledger.debit(sender, tx.deposit)
        if not is_fixpoint:
            rec.forfeited += tx.deposit
            rec.L.add(sender)
            return ("rejected", "not-a-fixpoint")
        rec.status = RequestStatus.COMPLETED
        rec.solver = sender
        rec.r, rec.c_n, rec.cp_ref, rec.n, rec.hc = tx.r_n, tx.c_n, tx.cp, n, tx.hc
        rec.deadline = self.now + self.config.verification_period
        rec.solver_stake = tx.deposit
        rec.round += 1
        return ("accepted", rec.round)

    def _fetch_cp(self, rec: RequestRecord, indices) -> dict[int, int]:
        indices = {i for i in indices if 1 <= i <= rec.n}
        if isinstance(rec.cp_ref, BlobRef):
            return oracle_fetch_projection(self.store, rec.cp_ref, indices)
        return {i: projection_entry(rec.cp_ref, i) for i in indices}

    def _adjudicate(self, rec: RequestRecord, tx: Refute, cp: dict[int, int]) -> tuple[bool, str]:
        task = self.registry.get(rec.task_ref)
        p, i, n = self.config.p, tx.i, rec.n
        if i == 0:
            start = AugmentedState(rec.d, chain_init(rec.d))
            self.hash_evaluations += 1
            first = self._apply_F(task, start)
            if n == 0:
                if first != start:
                    return True, "input-not-a-fixpoint"
                return (rec.r, rec.c_n) != (start.x, start.c), "final-pair"
            if first == start:
                return True, "chain-continues-past-fixpoint"
            return project(first.c, p) != cp[1], "divergence-at-1"

        if i == 1:
            self.hash_evaluations += 1
            if tx.r_prev != rec.d or tx.c_prev != chain_init(rec.d):
                return False, "anchor-mismatch"
        elif project(tx.c_prev, p) != cp[i - 1]:
            return False, "anchor-mismatch"
        try:
            out = self._apply_F(task, AugmentedState(tx.r_prev, tx.c_prev))
        except Exception:
            return False, "bad-state"
        if out.c != tx.c_cur or project(out.c, p) != cp[i]:
            return False, "step-mismatch"
        if i == n:
            return (out.x, out.c) != (rec.r, rec.c_n), "final-pair"
        c_next = self._H(combine(encode(out.x), out.c))
        return project(c_next, p) != cp[i + 1], f"divergence-at-{i + 1}"

    def _reopen(self, rec: RequestRecord) -> None:
        """Completed -> Published: the current solver loses its stake and joins L."""
        rec.L.add(rec.solver)
        rec.forfeited += rec.solver_stake
        rec.solver_stake = 0
        rec.solver = 0
        rec.status = RequestStatus.PUBLISHED
        rec.r = rec.c_n = rec.cp_ref = rec.n = rec.hc = rec.deadline = None
        for who, amount in sorted(rec.proof_stakes.items()):
            self.ledger.credit(who, amount)
        rec.proof_stakes.clear()
        rec.P.clear()

    def _refute(self, sender: int, tx: Refute) -> tuple:
        rec = self._req(tx.req)
        if rec.status != RequestStatus.COMPLETED:
            raise WrongStatus(f"request {tx.req} is {rec.status.value}")
        if self.now >= rec.deadline:
            raise TooLate("verification period is over")
        self._check_size(tx)
        self._check_deposit(sender, tx.deposit, self.config.refute_deposit)
        if not 0 <= tx.i <= rec.n:
            raise IndexOutOfRange(f"refutation index {tx.i} outside 0..{rec.n}")
        try:
            cp = self._fetch_cp(rec, {tx.i - 1, tx.i, tx.i + 1})
        except Unavailable:
            valid, reason = True, "projection-unavailable"
        except MalformedProjection:
            valid, reason = True, "projection-malformed"
        else:
            valid, reason = self._adjudicate(rec, tx, cp)

        self.ledger.debit(sender, tx.deposit)
        if not valid:
            rec.forfeited += tx.deposit
            rec.L.add(sender)
            return ("refutation-rejected", reason)
        rec.refuter_stakes.append((sender, tx.deposit))
        rec.V.add(sender)
        self._reopen(rec)
        return ("refutation-accepted", reason)

    def _prove(self, sender: int, tx: SubmitProof) -> tuple:
        rec = self._req(tx.req)
        if rec.status != RequestStatus.COMPLETED:
            raise WrongStatus(f"request {tx.req} is {rec.status.value}")
        if self.now >= rec.deadline:
            raise TooLate("verification period is over")
        if sender in rec.P:
            raise DuplicateProof(f"participant {sender} already submitted a proof")
        if not (isinstance(tx.prf, bytes) and len(tx.prf) == DIGEST_SIZE):
            raise InvalidTransaction("proof must be a digest")
        self._check_deposit(sender, tx.deposit, self.config.proof_deposit)
        self.ledger.debit(sender, tx.deposit)
        rec.P[sender] = tx.prf
        rec.proof_stakes[sender] = tx.deposit
        return ("proof-recorded", len(rec.P))

    def _reveal(self, sender: int, tx: RevealSecret) -> tuple:
        rec = self._req(tx.req)
        if rec.status != RequestStatus.COMPLETED:
            raise WrongStatus(f"request {tx.req} is {rec.status.value}")
        if sender != rec.solver:
            raise NotSolver(f"participant {sender} is not the solver")
        if self.now < rec.deadline:
            raise TooEarly(f"verification period ends at tick {rec.deadline}")
        if not isinstance(tx.s, bytes) or self._H(encode(tx.s)) != rec.hc:
            self._reopen(rec)
            return ("reveal-failed",)
        rec.s = tx.s
        for who, prf in sorted(rec.P.items()):
            self.hash_evaluations += 1
            if check_verification_proof(tx.s, VerificationProof(who, prf)):
                rec.V.add(who)
            else:
                rec.L.add(who)
                rec.forfeited += rec.proof_stakes.pop(who)
        rec.status = RequestStatus.VERIFIED
        rec.payout = self._pay(rec)
        return ("verified", tuple(sorted(rec.V)), tuple(sorted(rec.L)))

    def _expire(self, sender: int, tx: ExpireReveal) -> tuple:
        rec = self._req(tx.req)
        if rec.status != RequestStatus.COMPLETED:
            raise WrongStatus(f"request {tx.req} is {rec.status.value}")
        # the solver keeps the whole deadline tick (plus any grace) to reveal
        if self.now <= rec.deadline + self.config.reveal_window:
            raise TooEarly(f"reveal window is open through tick {rec.deadline + self.config.reveal_window}")
        self._reopen(rec)
        return ("expired",)

    _handlers = {
        PublishTask: _publish,
        SubmitSolution: _submit,
        Refute: _refute,
        SubmitProof: _prove,
        RevealSecret: _reveal,
        ExpireReveal: _expire,
    }

    # -- payout ---------------------------------------------------------------

    def _pay(self, rec: RequestRecord) -> Payout:
        refuter_total = sum(a for _, a in rec.refuter_stakes)
        proof_total = sum(rec.proof_stakes.values())
        pool = rec.reward + rec.solver_stake + refuter_total + proof_total
        transfers: dict[int, int] = defaultdict(int)

        # honest deposits go back
        transfers[rec.solver] += rec.solver_stake
        for who, amount in rec.refuter_stakes:
            transfers[who] += amount
        for who, amount in rec.proof_stakes.items():
            transfers[who] += amount

        rest = rec.reward + rec.forfeited
        solver_ok = rec.solver not in rec.L
        if solver_ok:
            cut = int(rec.reward * self.config.solver_share)
            transfers[rec.solver] += cut
            rest -= cut
        winners = sorted(rec.V - rec.L)
        if winners:
            each = rest // len(winners)
            for w in winners:
                transfers[w] += each
            rest -= each * len(winners)
        transfers[rec.solver if solver_ok else rec.owner] += rest

        for who, amount in sorted(transfers.items()):
            self.ledger.credit(who, amount)
        return Payout(pool, rec.forfeited, len(rec.refuter_stakes), len(rec.proof_stakes),
                      dict(sorted(transfers.items())))

    def payout(self, req: int) -> Payout:
        rec = self._req(req)
        if rec.status != RequestStatus.VERIFIED:
            raise WrongStatus(f"request {req} is {rec.status.value}")
        return rec.payout

    # -- views ----------------------------------------------------------------

    def query_request(self, req: int) -> dict:
        rec = self._req(req)
        view = {"status": rec.status.value, "task_ref": rec.task_ref, "d": rec.d, "round": rec.round}
        if rec.status == RequestStatus.COMPLETED:
            view.update(cp_ref=rec.cp_ref, r=rec.r, c_n=rec.c_n, hc=rec.hc, n=rec.n,
                        solver=rec.solver, deadline=rec.deadline)
        elif rec.status == RequestStatus.VERIFIED:
            view.update(r=rec.r, s=rec.s, solver=rec.solver,
                        V=tuple(sorted(rec.V)), L=tuple(sorted(rec.L)))
        return view

    def output(self, req: int) -> tuple:
        """``(r, s, solver, V, L)`` of a verified request."""
        rec = self._req(req)
        if rec.status != RequestStatus.VERIFIED:
            raise WrongStatus(f"request {req} is {rec.status.value}")
        return (rec.r, rec.s, rec.solver, tuple(sorted(rec.V)), tuple(sorted(rec.L)))


def replay(log: bytes, registry, config: ArbiterConfig = ArbiterConfig(),
           store: Optional[BlobStore] = None, balances: Optional[dict] = None) -> Arbiter:
    """Rebuild an arbiter by re-executing a transaction log, checking every outcome."""
    arb = Arbiter(registry, config, store, balances)
    for k, (tick, sender, body, outcome) in enumerate(decode_stream(log)):
        if tick < arb.now:
            raise ReplayDivergence(f"record {k}: tick {tick} precedes {arb.now}")
        arb.tick(tick - arb.now)
        got = arb.process(Transaction(sender, body)).outcome
        if got != outcome:
            raise ReplayDivergence(f"record {k}: logged {outcome!r}, replayed {got!r}")
    return arb
