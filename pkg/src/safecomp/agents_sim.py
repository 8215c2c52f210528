"""Deterministic multi-agent scenarios over the arbiter.

Time is a discrete tick counter. Every tick the request owner and then all
agents whose pending action is due act in ``(ready tick, agent id)`` order;
each action re-reads the public request view first, so an agent never acts
on stale state. Off-arbiter work (full runs, audits) happens inside an
agent's action and costs ``compute_delay`` ticks of waiting beforehand.
"""
from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Any, Optional

from .arbiter import (
    Arbiter,
    ArbiterConfig,
    ExpireReveal,
    PublishTask,
    Receipt,
    Refute,
    RequestStatus,
    RevealSecret,
    SubmitProof,
    SubmitSolution,
)
from .certificate import (
    CertChain,
    CertProjection,
    certificate_size,
    chain_extend,
    dump_projection,
    fingerprint,
    load_projection,
    make_projection,
    make_verification_proof,
    projection_header,
)
from .errors import MalformedFile, ScenarioError, Unavailable
from .hashing import DIGEST_SIZE, Digest, decode_stream, encode, hash_H
from .iterative import Agree, Disagree, RunResult, TaskProgram, audit_run, refutation_for, run_to_fixpoint
from .storage import BlobRef, BlobStore
from .tasks import FactorialState, TaskRegistry, TmConfig, TrivialState, default_registry

BEHAVIORS = (
    "honest-solver",
    "honest-auditor",
    "faulty-solver",
    "lazy-auditor",
    "griefing-refuter",
    "withholding-solver",
)
CORRUPTION_MODES = ("flip-result", "flip-cert-entry", "wrong-fixpoint")


@dataclass(frozen=True)
class AgentSpec:
    id: int
    behavior: str
    compute_delay: int = 0
    corrupt_step: Optional[int] = None   # faulty-solver only
    mode: Optional[str] = None           # faulty-solver only
    count: int = 1                       # griefing-refuter: refutations per publication
    balance: int = 1000

    def __post_init__(self):
        if self.id <= 0:
            raise ValueError("agent ids must be positive")
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")
        if self.behavior == "faulty-solver":
            if self.mode not in CORRUPTION_MODES:
                raise ValueError(f"faulty-solver needs a mode from {CORRUPTION_MODES}")
            if self.corrupt_step is None or self.corrupt_step < 1:
                raise ValueError("faulty-solver needs corrupt_step >= 1")
        if self.compute_delay < 0 or self.count < 0:
            raise ValueError("compute_delay and count must be non-negative")


@dataclass
class Scenario:
    task: str
    d: Any
    agents: list
    seed: int = 0
    config: ArbiterConfig = field(default_factory=ArbiterConfig)
    owner: int = 99
    owner_balance: int = 1000
    reward: int = 100
    max_ticks: int = 1000
    max_steps: int = 1_000_000
    cp_storage: str = "auto"             # auto | inline | external
    outages: tuple = ()                  # [start, end) tick windows with the blob store offline
    expect: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [a.id for a in self.agents] + [self.owner]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids (and the owner id) must be unique")
        if self.cp_storage not in ("auto", "inline", "external"):
            raise ValueError(f"unknown cp_storage {self.cp_storage!r}")

    @classmethod
    def from_dict(cls, doc: dict, registry: Optional[TaskRegistry] = None) -> "Scenario":
        registry = registry or default_registry()
        doc = dict(doc)
        task = registry.by_name(doc.pop("task"))
        raw = doc.pop("input")
        d = task.parse_input(str(raw)) if task.parse_input else raw
        agents = [AgentSpec(**a) for a in doc.pop("agents")]
        config = ArbiterConfig.from_dict(doc.pop("config", {}))
        outages = tuple(tuple(w) for w in doc.pop("outages", ()))
        return cls(task=task.name, d=d, agents=agents, config=config, outages=outages, **doc)


@dataclass(frozen=True)
class Publication:
    """What a solver sends: the claimed fixpoint plus its certificate data."""

    r_n: Any
    chain: CertChain
    secret: Digest
    hc: Digest

    @property
    def c_n(self) -> Digest:
        return self.chain.last

    def projection(self, p: int) -> CertProjection:
        return make_projection(self.chain, p)

    @classmethod
    def from_chain(cls, r_n, chain: CertChain) -> "Publication":
        if chain.n:
            secret, hc = fingerprint(chain)
        else:
            # nothing was computed; commit to the empty entry list all the same
            secret = hash_H(encode(()))
            hc = hash_H(encode(secret))
        return cls(r_n, chain, secret, hc)

    @classmethod
    def from_run(cls, run: RunResult) -> "Publication":
        return cls.from_chain(run.r_n, run.chain)


def corrupt_publication(task: TaskProgram, honest: RunResult, k: int, mode: str,
                        rng: random.Random, p: int = 16, max_steps: int = 1_000_000) -> Publication:
    """A forged publication that departs from ``honest`` at step ``k``.

    ``flip-cert-entry`` flips one of the leading ``p`` bits of ``c_k`` and
    re-derives the later entries, so the result is still a true fixpoint;
    ``flip-result`` swaps the state after step ``k`` for ``task.mutate``'s
    output and keeps iterating with a self-consistent chain; ``wrong-fixpoint``
    publishes the pre-step-``k`` state, which is not a fixpoint.
    """
    n = honest.n
    if not 1 <= k <= n:
        raise ValueError(f"corruption step {k} outside 1..{n}")
    states, entries = honest.states, list(honest.chain.entries)
    c0 = honest.chain.c0

    if mode == "flip-cert-entry":
        bit = rng.randrange(min(p, 8 * DIGEST_SIZE))
        flipped = bytearray(entries[k - 1])
        flipped[bit // 8] ^= 0x80 >> (bit % 8)
        entries[k - 1] = bytes(flipped)
        for j in range(k, n):
            entries[j] = chain_extend(states[j], entries[j - 1])
        return Publication.from_chain(honest.r_n, CertChain(c0, tuple(entries)))

    if mode == "flip-result":
        if task.mutate is None:
            raise ValueError(f"task {task.name} has no mutation operator")
        x = task.mutate(states[k], rng)
        if x == states[k]:
            raise ValueError("mutation left the state unchanged")
        entries = entries[:k]
        while True:
            y = task.step(x)
            if y == x:
                break
            if len(entries) >= max_steps:
                raise ValueError("mutated run does not terminate within the step budget")
            entries.append(chain_extend(x, entries[-1]))
            x = y
        return Publication.from_chain(x, CertChain(c0, tuple(entries)))

    if mode == "wrong-fixpoint":
        return Publication.from_chain(states[k - 1], CertChain(c0, tuple(entries[:k - 1])))

    raise ValueError(f"unknown corruption mode {mode!r}")


# -- metrics and reports --------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    n: Optional[int]
    certificate_bytes: Optional[int]  # C_f
    d_0: int
    d_max: Optional[int]
    transactions: int
    adjudications: int                # submissions plus refutations that reached a verdict
    f_applications: Optional[int] = None


def collect_metrics(log: bytes, run: Optional[RunResult] = None, store: Optional[BlobStore] = None,
                    f_applications: Optional[int] = None, q: int = 256) -> Metrics:
    """Metrics of a transaction log; ``run`` supplies the off-arbiter quantities.

    ``n`` is read from the last accepted solution's projection when it can be
    resolved, otherwise taken from ``run``.
    """
    records = decode_stream(log)
    d_0 = 0
    n = None
    adjudications = 0
    for _tick, _sender, body, outcome in records:
        if isinstance(body, PublishTask) and outcome[0] == "published":
            d_0 = len(encode(body.d))
        if isinstance(body, (SubmitSolution, Refute)) and outcome[0] != "error":
            adjudications += 1
        if isinstance(body, SubmitSolution) and outcome[0] == "accepted":
            cp = body.cp
            try:
                data = store.get(cp) if isinstance(cp, BlobRef) and store is not None else cp
                n = projection_header(data)[1] if isinstance(data, bytes) else n
            except (Unavailable, MalformedFile):
                pass
    if n is None and run is not None:
        n = run.n
    if run is not None and not d_0:
        d_0 = run.d_0
    return Metrics(
        n=n,
        certificate_bytes=None if n is None else certificate_size(n, q),
        d_0=d_0,
        d_max=run.d_max if run is not None else None,
        transactions=len(records),
        adjudications=adjudications,
        f_applications=f_applications,
    )


@dataclass
class ScenarioReport:
    status: str
    output: Optional[tuple]             # (r, s, solver, V, L) once verified
    ledger_deltas: dict
    metrics: Metrics
    final_tick: int
    log: bytes = field(repr=False)
    receipts: list = field(repr=False, default_factory=list)
    result_matches_reference: Optional[bool] = None

    def count(self, kind: str, outcome: Optional[str] = None) -> int:
        return sum(1 for r in self.receipts
                   if r.kind == kind and (outcome is None or r.outcome[0] == outcome))

    def summary(self) -> dict:
        return {
            "status": self.status,
            "final_tick": self.final_tick,
            "output": None if self.output is None else {
                "r": self.output[0], "s": self.output[1], "solver": self.output[2],
                "V": list(self.output[3]), "L": list(self.output[4])},
            "result_matches_reference": self.result_matches_reference,
            "ledger_deltas": {str(k): v for k, v in sorted(self.ledger_deltas.items())},
            "metrics": dataclasses.asdict(self.metrics),
            "events": [
                {"tick": r.tick, "sender": r.sender, "kind": r.kind, "outcome": list(r.outcome)}
                for r in self.receipts],
        }


# -- agents -------------------------------------------------------------------

class _Sim:
    """What agents may see: the public view, the blob store and their own runs."""

    def __init__(self, scenario: Scenario, registry: TaskRegistry):
        self.scenario = scenario
        self.task = registry.by_name(scenario.task)
        self.store = BlobStore()
        balances = {a.id: a.balance for a in scenario.agents}
        balances[scenario.owner] = scenario.owner_balance
        self.arbiter = Arbiter(registry, scenario.config, self.store, balances)
        self.req: Optional[int] = None
        self._honest_run: Optional[RunResult] = None

    @property
    def now(self) -> int:
        return self.arbiter.now

    def view(self) -> dict:
        return self.arbiter.query_request(self.req)

    def honest_run(self) -> RunResult:
        # every honest party computes the same thing; compute it once
        if self._honest_run is None:
            self._honest_run = run_to_fixpoint(self.task, self.scenario.d, self.scenario.max_steps,
                                               self.scenario.config.p)
        return self._honest_run

    def solution(self, pub: Publication, deposit: int) -> SubmitSolution:
        cfg = self.scenario.config
        inline = dump_projection(pub.projection(cfg.p))
        body = SubmitSolution(self.req, pub.r_n, pub.c_n, inline, pub.hc, deposit)
        mode = self.scenario.cp_storage
        if mode == "external" or (mode == "auto" and len(encode(body)) > cfg.t_max):
            body = dataclasses.replace(body, cp=self.store.put(inline))
        return body


class Agent:
    def __init__(self, spec: AgentSpec, sim: _Sim, rng: random.Random):
        self.spec, self.id, self.sim, self.rng = spec, spec.id, sim, rng
        self._seen: dict = {}
        self._done: set = set()

    def _due(self, key, earliest: Optional[int] = None) -> Optional[int]:
        if key in self._done:
            return None
        first = self._seen.setdefault(key, self.sim.now)
        ready = first + self.spec.compute_delay
        return ready if earliest is None else max(ready, earliest)

    def plan(self, view: dict) -> Optional[tuple]:
        """``(ready_tick, key)`` of the next action, or None."""
        return None

    def act(self, view: dict, key) -> list:
        return []

    def on_receipt(self, key, receipt: Receipt) -> None:
        self._done.add(key)


class HonestProvider(Agent):
    """Solves, audits, proves and reveals by the rules.

    Every honest provider works on an open request; an auditor gives
    dedicated solvers one tick of precedence, so with equal delays it ends
    up checking someone else's solution rather than racing it.
    """

    eager = False
    reveals = True

    def __init__(self, spec, sim, rng):
        super().__init__(spec, sim, rng)
        self.published: dict[int, Publication] = {}
        self.landed = False  # some solution of ours reached a verdict

    def plan(self, view):
        status = view["status"]
        rnd = view.get("round", 0)
        if status == RequestStatus.PUBLISHED.value:
            key = ("solve", rnd)
            if key in self._done:
                return None
            return (self._due(key) + (0 if self.eager else 1), key)
        elif status == RequestStatus.COMPLETED.value:
            if view["solver"] == self.id:
                if self.reveals:
                    key = ("reveal", rnd)
                    return (self._due(key, view["deadline"]), key) if key not in self._done else None
            else:
                key = ("audit", rnd)
                if key not in self._done and self.sim.now < view["deadline"]:
                    return (self._due(key), key)
        return None

    def act(self, view, key):
        what = key[0]
        cfg = self.sim.scenario.config
        if what == "solve":
            pub = Publication.from_run(self.sim.honest_run())
            self.published[self.sim.req] = pub
            return [self.sim.solution(pub, cfg.solver_deposit)]
        if what == "reveal":
            return [RevealSecret(self.sim.req, self.published[self.sim.req].secret)]
        if what == "audit":
            return self.audit(view)
        return []

    def audit(self, view) -> list:
        local = self.sim.honest_run()
        req, cfg = self.sim.req, self.sim.scenario.config
        cp_ref = view["cp_ref"]
        try:
            data = self.sim.store.get(cp_ref) if isinstance(cp_ref, BlobRef) else cp_ref
            published_cp = load_projection(data)
        except (Unavailable, MalformedFile):
            # an unreadable projection is the solver's fault; claim it
            r = refutation_for(local, 0)
            return [Refute(req, 0, r.r_prev, r.c_prev, r.c_cur, cfg.refute_deposit)]
        verdict = audit_run(self.sim.task, self.sim.scenario.d, published_cp, view["hc"],
                            self.sim.scenario.max_steps, (view["r"], view["c_n"]), local=local)
        if isinstance(verdict, Agree):
            prf = make_verification_proof(verdict.secret, self.id).prf
            return [SubmitProof(req, prf, cfg.proof_deposit)]
        if isinstance(verdict, Disagree):
            return [Refute(req, verdict.index, verdict.r_prev, verdict.c_prev, verdict.c_cur,
                           cfg.refute_deposit)]
        return []  # fingerprint differs but nothing refutable: stay out

    def on_receipt(self, key, receipt):
        # a declined solution (blob store offline) is retried on the next tick
        if key[0] == "solve" and receipt.outcome == ("error", "BlobUnavailable"):
            self._seen[key] = self.sim.now + 1 - self.spec.compute_delay
            return
        if key[0] == "solve" and receipt.ok:
            self.landed = True
        super().on_receipt(key, receipt)


class HonestSolver(HonestProvider):
    eager = True


class HonestAuditor(HonestProvider):
    eager = False


class WithholdingSolver(HonestProvider):
    """Publishes an honest solution once and then never reveals the secret."""

    eager = True
    reveals = False

    def plan(self, view):
        if view["status"] == RequestStatus.PUBLISHED.value and not self.landed:
            return super().plan(view)
        return None


class FaultySolver(HonestProvider):
    """Publishes one corrupted solution, then reveals its forged secret if it survives."""

    eager = True

    def plan(self, view):
        if view["status"] == RequestStatus.PUBLISHED.value:
            return None if self.landed else super().plan(view)
        if view["status"] == RequestStatus.COMPLETED.value and view["solver"] == self.id:
            return super().plan(view)
        return None

    def act(self, view, key):
        if key[0] != "solve":
            return super().act(view, key)
        cfg = self.sim.scenario.config
        pub = corrupt_publication(self.sim.task, self.sim.honest_run(), self.spec.corrupt_step,
                                  self.spec.mode, self.rng, cfg.p, self.sim.scenario.max_steps)
        self.published[self.sim.req] = pub
        return [self.sim.solution(pub, cfg.solver_deposit)]


class LazyAuditor(Agent):
    """Skips the work and files a random proof of verification."""

    def plan(self, view):
        if view["status"] == RequestStatus.COMPLETED.value and view["solver"] != self.id:
            key = ("proof", view["round"])
            if key not in self._done and self.sim.now < view["deadline"]:
                return (self._due(key), key)
        return None

    def act(self, view, key):
        cfg = self.sim.scenario.config
        return [SubmitProof(self.sim.req, self.rng.randbytes(DIGEST_SIZE), cfg.proof_deposit)]


class GriefingRefuter(Agent):
    """Files ``count`` random refutations against every publication."""

    def plan(self, view):
        if view["status"] == RequestStatus.COMPLETED.value and view["solver"] != self.id:
            key = ("grief", view["round"])
            if key not in self._done and self.sim.now < view["deadline"]:
                return (self._due(key), key)
        return None

    def act(self, view, key):
        cfg = self.sim.scenario.config
        n = view["n"]
        out = []
        for _ in range(self.spec.count):
            i = self.rng.randint(min(1, n), n)
            out.append(Refute(self.sim.req, i, view["r"], self.rng.randbytes(DIGEST_SIZE),
                              self.rng.randbytes(DIGEST_SIZE), cfg.refute_deposit))
        return out


_AGENT_CLASSES = {
    "honest-solver": HonestSolver,
    "honest-auditor": HonestAuditor,
    "faulty-solver": FaultySolver,
    "lazy-auditor": LazyAuditor,
    "griefing-refuter": GriefingRefuter,
    "withholding-solver": WithholdingSolver,
}


def _agent_rng(seed: int, agent_id: int) -> random.Random:
    return random.Random(f"safecomp-agent:{seed}:{agent_id}")


def run_scenario(sc: Scenario, registry: Optional[TaskRegistry] = None) -> ScenarioReport:
    registry = registry or default_registry()
    sim = _Sim(sc, registry)
    arb = sim.arbiter
    agents = sorted((_AGENT_CLASSES[a.behavior](a, sim, _agent_rng(sc.seed, a.id)) for a in sc.agents),
                    key=lambda a: a.id)
    if sc.reward > sc.owner_balance:
        raise ScenarioError("owner cannot fund the reward", 0)

    def in_outage(t):
        return any(start <= t < end for start, end in sc.outages)

    try:
        sim.store.set_outage(in_outage(arb.now))
        receipt = arb.submit(sc.owner, PublishTask(sim.task.task_id, sc.d, sc.reward)).raise_for_error()
        sim.req = receipt.outcome[1]
        while True:
            view = sim.view()
            if view["status"] == RequestStatus.VERIFIED.value or arb.now >= sc.max_ticks:
                break
            # the owner clears a solution whose secret never arrived
            if view["status"] == RequestStatus.COMPLETED.value and \
                    arb.now > view["deadline"] + sc.config.reveal_window:
                arb.submit(sc.owner, ExpireReveal(sim.req))
            plans = []
            for agent in agents:
                plan = agent.plan(sim.view())
                if plan is not None and plan[0] <= arb.now:
                    plans.append((plan[0], agent.id, agent, plan[1]))
            for _ready, _id, agent, key in sorted(plans, key=lambda t: t[:2]):
                view = sim.view()
                again = agent.plan(view)
                if again is None or again[1] != key:
                    continue  # the situation changed under this agent
                bodies = agent.act(view, key)
                last = None
                for body in bodies:
                    last = arb.submit(agent.id, body)
                if last is not None:
                    agent.on_receipt(key, last)
                else:
                    agent._done.add(key)
            arb.tick(1)
            sim.store.set_outage(in_outage(arb.now))
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"{type(exc).__name__}: {exc}", arb.now) from exc
    finally:
        sim.store.set_outage(False)

    rec = arb.requests[sim.req]
    output = arb.output(sim.req) if rec.status == RequestStatus.VERIFIED else None
    ids = sorted(set(arb.initial_balances) | set(arb.ledger.balances))
    deltas = {i: arb.ledger.balances[i] - arb.initial_balances.get(i, 0) for i in ids}
    run = None
    try:
        run = sim.honest_run()
    except Exception:  # the report still stands without off-arbiter metrics
        pass
    metrics = collect_metrics(arb.log_bytes(), run, sim.store, arb.f_applications)
    matches = None
    if output is not None and sim.task.proj is not None and sim.task.reference is not None:
        try:
            matches = sim.task.proj(output[0]) == _reference_answer(sim.task, sc.d)
        except Exception:
            matches = False
    return ScenarioReport(rec.status.value, output, deltas, metrics, arb.now, arb.log_bytes(),
                          list(arb.receipts), matches)


def _reference_answer(task: TaskProgram, d):
    # scenario inputs are start states; recover the plain argument of the reference
    if isinstance(d, FactorialState):
        return task.reference(d.n) * d.acc
    if isinstance(d, TrivialState):
        return task.reference(d.x)
    if isinstance(d, TmConfig):
        return task.reference(task.proj(d))
    return task.reference(d)


def check_expectations(report: ScenarioReport, expect: dict) -> list[str]:
    """Violated expectations, in a stable order (empty when all hold)."""
    problems = []
    out = report.output
    if "status" in expect and report.status != expect["status"]:
        problems.append(f"status: expected {expect['status']}, got {report.status}")
    if "solver" in expect and (out is None or out[2] != expect["solver"]):
        problems.append(f"solver: expected {expect['solver']}, got {None if out is None else out[2]}")
    for key, pos in (("V", 3), ("L", 4)):
        if key in expect and (out is None or list(out[pos]) != sorted(expect[key])):
            problems.append(f"{key}: expected {sorted(expect[key])}, got {None if out is None else list(out[pos])}")
    if "L_includes" in expect:
        got = set() if out is None else set(out[4])
        missing = sorted(set(expect["L_includes"]) - got)
        if missing:
            problems.append(f"L: expected to include {missing}")
    if expect.get("correct_result") and not report.result_matches_reference:
        problems.append("result does not match the reference computation")
    for key, (kind, outcome) in {
        "accepted_refutations": ("Refute", "refutation-accepted"),
        "rejected_refutations": ("Refute", "refutation-rejected"),
        "declined_solutions": ("SubmitSolution", "error"),
        "rejected_solutions": ("SubmitSolution", "rejected"),
        "expirations": ("ExpireReveal", "expired"),
    }.items():
        if key in expect:
            got = report.count(kind, outcome)
            want = expect[key]
            if isinstance(want, dict):
                lo = want.get("min", 0)
                hi = want.get("max", float("inf"))
                if not lo <= got <= hi:
                    problems.append(f"{key}: expected within [{lo}, {hi}], got {got}")
            elif got != want:
                problems.append(f"{key}: expected {want}, got {got}")
    return problems
