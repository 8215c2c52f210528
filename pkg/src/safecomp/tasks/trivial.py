"""The two-step construction: tag 0 applies the whole function, tag 1 is final."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from ..hashing import register_record
from ..iterative import TaskProgram


@register_record("safecomp.TrivialState")
@dataclass(frozen=True)
class TrivialState:
    x: object
    tag: int = 0


REFERENCE_POOL: dict[str, Callable] = {
    "identity": lambda x: x,
    "square": lambda x: x * x,
    "double": lambda x: 2 * x,
    "successor": lambda x: x + 1,
    "factorial": math.factorial,
    "popcount": lambda x: bin(x).count("1"),
    "digit-sum": lambda x: sum(map(int, str(x))),
    "collatz-length": lambda x: _collatz_length(x),
}


def _collatz_length(x: int) -> int:
    steps = 0
    while x > 1:
        x = x // 2 if x % 2 == 0 else 3 * x + 1
        steps += 1
    return steps


def trivial_inj(d) -> TrivialState:
    return TrivialState(d, 0)


def trivial_proj(state: TrivialState):
    return state.x


def trivial_lift(fn: Union[str, tuple[str, Callable]]) -> TaskProgram:
    """Task for a reference function, given by pool name or as ``(name, callable)``.

    The name is part of the task descriptor, so two parties agree on the task
    only if they agree on what the name means.
    """
    if isinstance(fn, str):
        name, C = fn, REFERENCE_POOL[fn]
    else:
        name, C = fn

    def step(s: TrivialState) -> TrivialState:
        if s.tag == 1:
            return s
        return TrivialState(C(s.x), 1)

    return TaskProgram(
        name=f"trivial-{name}",
        descriptor=("safecomp.task", "trivial", name),
        step=step,
        inj=trivial_inj,
        proj=trivial_proj,
        mutate=lambda s, rng: TrivialState(rng.randrange(1 << 16), 1),
        parse_input=lambda text: trivial_inj(int(text)),
        reference=C,
    )
