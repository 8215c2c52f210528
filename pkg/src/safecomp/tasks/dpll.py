"""DPLL in fixpoint form.

The state is the formula plus a trail of ``(var, value, is_decision)``
entries; every step does one bounded unit of work: the initial load, one
unit-propagation round, one decision, or one backtrack. Decisions pick the
lowest unassigned variable and try ``True`` first, so runs are reproducible
bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..hashing import register_record
from ..iterative import TaskProgram
from .cnf import CnfFormula, Verdict, brute_force_sat, parse_dimacs

SEARCH, SAT, UNSAT = "search", "sat", "unsat"


@register_record("safecomp.DpllState")
@dataclass(frozen=True)
class DpllState:
    formula: CnfFormula
    mode: str = SEARCH
    trail: tuple[tuple[int, bool, bool], ...] = ()

    @property
    def done(self) -> bool:
        return self.mode != SEARCH


def _backtrack(x: DpllState) -> DpllState:
    trail = list(x.trail)
    while trail and not trail[-1][2]:
        trail.pop()
    if not trail:
        return DpllState(x.formula, UNSAT, ())
    var, value, _ = trail.pop()
    trail.append((var, not value, False))
    return DpllState(x.formula, SEARCH, tuple(trail))


def dpll_step(x):
    if isinstance(x, CnfFormula):
        return DpllState(x, SEARCH, ())
    if x.mode != SEARCH:
        return x
    f = x.formula
    assign = {v: val for v, val, _ in x.trail}
    units: list[int] = []
    open_clause = False
    for clause in f.clauses:
        free = 0
        last = 0
        for lit in clause:
            val = assign.get(abs(lit))
            if val is None:
                free += 1
                last = lit
            elif val == (lit > 0):
                break
        else:
            if free == 0:
                return _backtrack(x)
            if free == 1:
                units.append(last)
            else:
                open_clause = True
    if units:
        seen: set[int] = set()
        new = []
        for lit in units:
            # a complementary pair surfaces as a conflict on the next step
            if abs(lit) not in seen:
                seen.add(abs(lit))
                new.append((abs(lit), lit > 0, False))
        return DpllState(f, SEARCH, x.trail + tuple(new))
    if not open_clause:
        model = tuple((v, assign.get(v, False), False) for v in range(1, f.num_vars + 1))
        return DpllState(f, SAT, model)
    var = next(v for v in range(1, f.num_vars + 1) if v not in assign)
    return DpllState(f, SEARCH, x.trail + ((var, True, True),))


def dpll_verdict(x: DpllState) -> Verdict:
    if x.mode == SAT:
        return Verdict(True, tuple(v if val else -v for v, val, _ in x.trail))
    if x.mode == UNSAT:
        return Verdict(False)
    raise ValueError("DPLL state has not reached a verdict")


def _mutate(x, rng):
    # jump straight to the opposite verdict; the result is a (wrong) fixpoint
    if isinstance(x, CnfFormula):
        return DpllState(x, UNSAT, ())
    if x.mode == UNSAT:
        return DpllState(x.formula, SAT, ())
    return DpllState(x.formula, UNSAT, ())


def _parse(text: str) -> CnfFormula:
    path = Path(text)
    if "\n" not in text and path.exists():
        return parse_dimacs(path.read_bytes())
    return parse_dimacs(text)


def dpll_budget(f: CnfFormula) -> int:
    """Step budget 2 * 3^vars, comfortably above the search-tree size."""
    return 2 * 3 ** f.num_vars


def dpll_task() -> TaskProgram:
    return TaskProgram(
        name="dpll",
        descriptor=("safecomp.task", "dpll", 1),
        step=dpll_step,
        inj=lambda f: f,
        proj=lambda x: dpll_verdict(x).satisfiable,
        mutate=_mutate,
        parse_input=_parse,
        reference=lambda f: brute_force_sat(f).satisfiable,
    )
