"""Single-tape Turing machines as fixpoint-form tasks.

Tape layout used by ``tm_inj``/``tm_proj``: the input numeral occupies cells
``1..k`` and a reserved end mark sits at cell ``k + 1``. Machines are
expected to leave their answer in the same shape, starting at cell 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import MalformedTape
from ..hashing import register_record
from ..iterative import TaskProgram

LEFT, RIGHT = "L", "R"
ANSWER_START = 1


@dataclass(frozen=True)
class TuringMachine:
    name: str
    states: tuple[str, ...]
    tape_alphabet: tuple[str, ...]
    input_alphabet: tuple[str, ...]
    delta: dict = field(hash=False)  # (q, symbol) -> (q', write, move)
    q0: str
    blank: str
    accepting: tuple[str, ...]
    end_mark: str = "$"
    numeral: str = "unary"

    def __post_init__(self):
        Q, G = set(self.states), set(self.tape_alphabet)
        if self.q0 not in Q or not set(self.accepting) <= Q:
            raise ValueError("initial and accepting states must belong to Q")
        if not set(self.input_alphabet) <= G or self.blank not in G or self.end_mark not in G:
            raise ValueError("input symbols, blank and end mark must belong to the tape alphabet")
        if self.end_mark in self.input_alphabet or self.blank in self.input_alphabet:
            raise ValueError("blank and end mark are reserved")
        if self.numeral not in ("unary", "binary"):
            raise ValueError(f"unknown numeral system {self.numeral!r}")
        for q in Q - set(self.accepting):
            for s in G:
                if (q, s) not in self.delta:
                    raise ValueError(f"transition function undefined on ({q}, {s})")
        for (q, s), (q2, w, mv) in self.delta.items():
            if q not in Q or q2 not in Q or s not in G or w not in G or mv not in (LEFT, RIGHT):
                raise ValueError(f"bad transition ({q}, {s}) -> ({q2}, {w}, {mv})")

    def descriptor(self):
        return ("safecomp.tm", self.name, self.states, self.tape_alphabet, self.input_alphabet,
                dict(self.delta), self.q0, self.blank, self.accepting, self.end_mark, self.numeral)


@register_record("safecomp.TmConfig")
@dataclass(frozen=True)
class TmConfig:
    tape: tuple[tuple[int, str], ...]  # sorted (position, symbol), blanks omitted
    q: str
    head: int

    def cells(self) -> dict[int, str]:
        return dict(self.tape)


def _freeze_tape(cells: dict[int, str], blank: str) -> tuple[tuple[int, str], ...]:
    return tuple(sorted((p, s) for p, s in cells.items() if s != blank))


def tm_step(M: TuringMachine) -> Callable[[TmConfig], TmConfig]:
    accepting = frozenset(M.accepting)

    def step(cfg: TmConfig) -> TmConfig:
        if cfg.q in accepting:
            return cfg
        cells = dict(cfg.tape)
        q2, write, move = M.delta[(cfg.q, cells.get(cfg.head, M.blank))]
        cells[cfg.head] = write
        head = cfg.head + (1 if move == RIGHT else -1)
        return TmConfig(_freeze_tape(cells, M.blank), q2, head)

    return step


def _numeral(M: TuringMachine, d: int) -> str:
    if d < 0:
        raise ValueError("machine inputs are natural numbers")
    return "1" * d if M.numeral == "unary" else format(d, "b")


def tm_inj(M: TuringMachine, d: int) -> TmConfig:
    word = _numeral(M, d)
    cells = {ANSWER_START + k: s for k, s in enumerate(word)}
    cells[ANSWER_START + len(word)] = M.end_mark
    return TmConfig(_freeze_tape(cells, M.blank), M.q0, ANSWER_START)


def read_answer_area(cfg: TmConfig, M: TuringMachine) -> str:
    cells = cfg.cells()
    last = max(cells, default=ANSWER_START - 1)
    out = []
    pos = ANSWER_START
    while pos <= last:
        sym = cells.get(pos, M.blank)
        if sym == M.end_mark:
            return "".join(out)
        out.append(sym)
        pos += 1
    raise MalformedTape("answer area has no end mark")


def tm_proj(cfg: TmConfig, M: TuringMachine) -> int:
    word = read_answer_area(cfg, M)
    if M.numeral == "unary":
        if set(word) - {"1"}:
            raise MalformedTape(f"unary answer contains {word!r}")
        return len(word)
    if not word or set(word) - {"0", "1"}:
        raise MalformedTape(f"binary answer contains {word!r}")
    return int(word, 2)


def _mutate(M: TuringMachine):
    # halt at once after scribbling on a blank cell left of everything written so far
    def mutate(cfg: TmConfig, rng) -> TmConfig:
        cells = cfg.cells()
        cells[min(cells, default=ANSWER_START) - 1] = rng.choice(M.input_alphabet)
        return TmConfig(_freeze_tape(cells, M.blank), M.accepting[0], cfg.head)

    return mutate


def tm_task(M: TuringMachine, reference: Optional[Callable[[int], int]] = None) -> TaskProgram:
    return TaskProgram(
        name=f"tm-{M.name}",
        descriptor=("safecomp.task", "tm", M.descriptor()),
        step=tm_step(M),
        inj=lambda d: tm_inj(M, d),
        proj=lambda cfg: tm_proj(cfg, M),
        mutate=_mutate(M),
        parse_input=lambda text: tm_inj(M, int(text)),
        reference=reference,
    )


def increment_machine() -> TuringMachine:
    """Unary successor: walk to the end mark, turn it into a 1, re-mark."""
    B = "_"
    delta = {
        ("scan", "1"): ("scan", "1", RIGHT),
        ("scan", "$"): ("mark", "1", RIGHT),
        ("scan", B): ("scan", B, RIGHT),
        ("mark", B): ("halt", "$", LEFT),
        ("mark", "1"): ("mark", "1", RIGHT),
        ("mark", "$"): ("mark", "$", RIGHT),
    }
    return TuringMachine("unary-increment", ("scan", "mark", "halt"), (B, "1", "$"), ("1",),
                         delta, "scan", B, ("halt",), "$", "unary")


def binary_successor_machine() -> TuringMachine:
    """Binary successor, most significant bit first.

    On overflow (all ones) the bits become zeros, cell 1 is set to 1 and the
    end mark moves one cell to the right.
    """
    B = "_"
    delta = {
        ("scan", "0"): ("scan", "0", RIGHT),
        ("scan", "1"): ("scan", "1", RIGHT),
        ("scan", "$"): ("carry", "$", LEFT),
        ("scan", B): ("scan", B, RIGHT),
        ("carry", "1"): ("carry", "0", LEFT),
        ("carry", "0"): ("halt", "1", LEFT),
        ("carry", B): ("lead", B, RIGHT),
        ("carry", "$"): ("carry", "$", LEFT),
        ("lead", "0"): ("extend", "1", RIGHT),
        ("lead", "1"): ("extend", "1", RIGHT),
        ("lead", "$"): ("extend", "$", RIGHT),
        ("lead", B): ("lead", B, RIGHT),
        ("extend", "0"): ("extend", "0", RIGHT),
        ("extend", "1"): ("extend", "1", RIGHT),
        ("extend", "$"): ("remark", "0", RIGHT),
        ("extend", B): ("extend", B, RIGHT),
        ("remark", B): ("halt", "$", LEFT),
        ("remark", "0"): ("remark", "0", RIGHT),
        ("remark", "1"): ("remark", "1", RIGHT),
        ("remark", "$"): ("remark", "$", RIGHT),
    }
    states = ("scan", "carry", "lead", "extend", "remark", "halt")
    return TuringMachine("binary-successor", states, (B, "0", "1", "$"), ("0", "1"),
                         delta, "scan", B, ("halt",), "$", "binary")
