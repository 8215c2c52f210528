"""Concrete iterative tasks and the shared task registry."""
from __future__ import annotations

from typing import Iterable, Optional

from ..errors import UnknownTask
from ..hashing import Digest
from ..iterative import TaskProgram
from .cnf import (
    CnfFormula,
    Verdict,
    brute_force_sat,
    emit_dimacs,
    load_dimacs,
    parse_dimacs,
    random_cnf,
)
from .dpll import DpllState, dpll_budget, dpll_step, dpll_task, dpll_verdict
from .factorial import FactorialState, factorial_recursive, factorial_step, factorial_task
from .trivial import REFERENCE_POOL, TrivialState, trivial_inj, trivial_lift, trivial_proj
from .turing import (
    TmConfig,
    TuringMachine,
    binary_successor_machine,
    increment_machine,
    read_answer_area,
    tm_inj,
    tm_proj,
    tm_step,
    tm_task,
)


class TaskRegistry:
    """Tasks keyed by content digest of their descriptor, with a name index."""

    def __init__(self, tasks: Iterable[TaskProgram] = ()):
        self._by_id: dict[Digest, TaskProgram] = {}
        self._by_name: dict[str, TaskProgram] = {}
        for t in tasks:
            self.register(t)

    def register(self, task: TaskProgram) -> Digest:
        other = self._by_name.get(task.name)
        if other is not None and other.task_id != task.task_id:
            raise ValueError(f"task name {task.name!r} already bound to a different task")
        self._by_id[task.task_id] = task
        self._by_name[task.name] = task
        return task.task_id

    def get(self, task_id: Digest) -> TaskProgram:
        try:
            return self._by_id[task_id]
        except KeyError:
            raise UnknownTask(f"no task with id {task_id.hex()}") from None

    def by_name(self, name: str) -> TaskProgram:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownTask(f"no task named {name!r}; known: {', '.join(sorted(self._by_name))}") from None

    def __contains__(self, task_id) -> bool:
        return task_id in self._by_id

    def names(self) -> list[str]:
        return sorted(self._by_name)


def default_registry(extra: Optional[Iterable[TaskProgram]] = None) -> TaskRegistry:
    tasks = [
        factorial_task(),
        dpll_task(),
        tm_task(increment_machine(), reference=lambda d: d + 1),
        tm_task(binary_successor_machine(), reference=lambda d: d + 1),
    ]
    tasks += [trivial_lift(name) for name in REFERENCE_POOL]
    return TaskRegistry(tasks + list(extra or ()))


__all__ = [
    "CnfFormula",
    "DpllState",
    "FactorialState",
    "REFERENCE_POOL",
    "TaskRegistry",
    "TmConfig",
    "TrivialState",
    "TuringMachine",
    "Verdict",
    "binary_successor_machine",
    "brute_force_sat",
    "default_registry",
    "dpll_budget",
    "dpll_step",
    "dpll_task",
    "dpll_verdict",
    "emit_dimacs",
    "factorial_recursive",
    "factorial_step",
    "factorial_task",
    "increment_machine",
    "load_dimacs",
    "parse_dimacs",
    "random_cnf",
    "read_answer_area",
    "tm_inj",
    "tm_proj",
    "tm_step",
    "tm_task",
    "trivial_inj",
    "trivial_lift",
    "trivial_proj",
]
