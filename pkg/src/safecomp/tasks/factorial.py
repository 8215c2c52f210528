from __future__ import annotations

import math
from dataclasses import dataclass

from ..hashing import register_record
from ..iterative import TaskProgram


@register_record("safecomp.FactorialState")
@dataclass(frozen=True)
class FactorialState:
    n: int
    acc: int = 1


def factorial_step(x: FactorialState) -> FactorialState:
    if x.n == 0:
        return x
    return FactorialState(x.n - 1, x.n * x.acc)


def factorial_recursive(n: int) -> int:
    return 1 if n == 0 else n * factorial_recursive(n - 1)


def _mutate(x: FactorialState, rng) -> FactorialState:
    return FactorialState(x.n, x.acc + 1 + rng.randrange(1000))


def _parse(text: str) -> FactorialState:
    parts = [int(t) for t in text.replace(",", " ").split()]
    if len(parts) == 1:
        return FactorialState(parts[0], 1)
    if len(parts) == 2:
        return FactorialState(*parts)
    raise ValueError(f"factorial input must be 'N' or 'N,ACC', got {text!r}")


def factorial_task() -> TaskProgram:
    return TaskProgram(
        name="factorial",
        descriptor=("safecomp.task", "factorial", 1),
        step=factorial_step,
        inj=lambda d: FactorialState(d, 1),
        proj=lambda x: x.acc,
        mutate=_mutate,
        parse_input=_parse,
        reference=math.factorial,
    )
