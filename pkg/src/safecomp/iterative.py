"""Fixpoint-form computations: the certified lift and the run/audit drivers."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Optional, Union

from .certificate import (
    CertChain,
    CertProjection,
    chain_extend,
    chain_init,
    fingerprint,
    first_divergence,
    make_projection,
)
from .errors import LengthMismatchBeyondDivergence, StateTooLarge, StepBudgetExhausted
from .hashing import DEFAULT_P, Digest, encode, hash_H, register_record

DEFAULT_MAX_STATE_BYTES = 64 * 1024


@dataclass(frozen=True, eq=False)
class TaskProgram:
    """An iterative computation ``x -> step(x)`` iterated until ``step(x) == x``.

    ``descriptor`` is an encodable value that names the computation; its hash
    is the task id shared by every party. ``inj``/``proj`` map a plain input
    into a start state and a fixpoint back into an answer, when the task has
    such a convention. ``mutate`` is used only by adversary generators.
    """

    name: str
    descriptor: Any
    step: Callable[[Any], Any]
    max_state_bytes: int = DEFAULT_MAX_STATE_BYTES
    inj: Optional[Callable[[Any], Any]] = None
    proj: Optional[Callable[[Any], Any]] = None
    mutate: Optional[Callable[[Any, Any], Any]] = None
    parse_input: Optional[Callable[[str], Any]] = None
    reference: Optional[Callable[[Any], Any]] = None

    @cached_property
    def task_id(self) -> Digest:
        return hash_H(encode(self.descriptor))

    def is_fixpoint(self, x) -> bool:
        return self.step(x) == x

    def __repr__(self):
        return f"TaskProgram({self.name!r}, id={self.task_id.hex()[:12]})"


@register_record("safecomp.AugmentedState")
@dataclass(frozen=True)
class AugmentedState:
    x: Any
    c: Digest


def _checked_step(task: TaskProgram, x):
    y = task.step(x)
    if y != x:
        size = len(encode(y))
        if size > task.max_state_bytes:
            raise StateTooLarge(
                f"{task.name}: state of {size} bytes exceeds the {task.max_state_bytes}-byte limit")
    return y


def lift(task: TaskProgram) -> Callable[[AugmentedState], AugmentedState]:
    """The certified step: identity on fixpoints, otherwise advance and extend the chain."""

    def F(aug: AugmentedState) -> AugmentedState:
        y = _checked_step(task, aug.x)
        if y == aug.x:
            return aug
        return AugmentedState(y, chain_extend(aug.x, aug.c))

    return F


@dataclass(frozen=True)
class RunResult:
    r_n: Any
    chain: CertChain
    states: tuple = field(repr=False)
    secret: Optional[Digest]
    hc: Optional[Digest]
    cp: CertProjection
    d_0: int
    d_max: int

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def c_n(self) -> Digest:
        return self.chain.last

    @property
    def certificate_bytes(self) -> int:
        return self.chain.size_bytes()


def run_to_fixpoint(task: TaskProgram, d, max_steps: int, p: int = DEFAULT_P) -> RunResult:
    """Iterate the lifted step from ``<d, H(d)>`` until a fixpoint.

    Each iteration evaluates ``task.step`` once and uses the value both for
    the fixpoint test and as the successor state.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    c0 = chain_init(d)
    x, c = d, c0
    entries: list[Digest] = []
    states = [d]
    d_0 = d_max = len(encode(d))
    while True:
        y = task.step(x)
        if y == x:
            break
        if len(entries) == max_steps:
            raise StepBudgetExhausted(max_steps)
        size = len(encode(y))
        if size > task.max_state_bytes:
            raise StateTooLarge(
                f"{task.name}: state of {size} bytes exceeds the {task.max_state_bytes}-byte limit")
        d_max = max(d_max, size)
        c = chain_extend(x, c)
        entries.append(c)
        states.append(y)
        x = y
    chain = CertChain(c0, tuple(entries))
    secret = hc = None
    if chain.n:
        secret, hc = fingerprint(chain)
    return RunResult(x, chain, tuple(states), secret, hc, make_projection(chain, p), d_0, d_max)


# -- auditing ---------------------------------------------------------------

@dataclass(frozen=True)
class Agree:
    secret: Digest


@dataclass(frozen=True)
class Disagree:
    """A ready-to-submit refutation.

    ``divergence`` is the first certificate position that disagrees with the
    publication; ``index`` is the refutation index the arbiter expects, the
    last agreeing position (``divergence - 1``). ``r_prev, c_prev, c_cur`` are
    the honest ``x_{index-1}, c_{index-1}, c_index``; at index 0 the arbiter
    recomputes them from the request input and ignores the payload.
    """

    index: int
    divergence: int
    r_prev: Any
    c_prev: Digest
    c_cur: Digest


@dataclass(frozen=True)
class FingerprintOnlyMismatch:
    pass


AuditOutcome = Union[Agree, Disagree, FingerprintOnlyMismatch]


def refutation_for(local: RunResult, index: int) -> Disagree:
    if index == 0:
        return Disagree(0, 1, local.states[0], local.chain.c0, local.chain.c0)
    return Disagree(index, index + 1, local.states[index - 1],
                    local.chain.at(index - 1), local.chain.at(index))


def audit_run(
    task: TaskProgram,
    d,
    published_cp: CertProjection,
    published_hc: Optional[Digest],
    max_steps: int,
    published_result: Optional[tuple] = None,
    local: Optional[RunResult] = None,
) -> AuditOutcome:
    """Recompute locally and compare with a publication.

    ``published_result`` is the published ``(r_n, c_n)`` pair; when given, a
    wrong final pair over an otherwise matching certificate is also refuted.
    """
    if local is None:
        local = run_to_fixpoint(task, d, max_steps, p=published_cp.p)
    elif local.cp.p != published_cp.p:
        local = RunResult(local.r_n, local.chain, local.states, local.secret, local.hc,
                          make_projection(local.chain, published_cp.p), local.d_0, local.d_max)
    result_ok = published_result is None or (
        tuple(published_result) == (local.r_n, local.c_n))
    if local.hc is not None and local.hc == published_hc and result_ok:
        return Agree(local.secret)
    try:
        j = first_divergence(local.cp, published_cp)
    except LengthMismatchBeyondDivergence as exc:
        j = min(exc.mine_len, exc.published_len) + 1
    if j is None:
        if not result_ok:
            return refutation_for(local, published_cp.n)
        return FingerprintOnlyMismatch()
    return refutation_for(local, j - 1)
