"""CNF formulas, DIMACS I/O and an exhaustive truth-table oracle."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ..errors import HeaderMismatch, ParseError, TooManyVariables
from ..hashing import register_record

BRUTE_FORCE_LIMIT = 24


@register_record("safecomp.CnfFormula")
@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        for clause in self.clauses:
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} outside 1..{self.num_vars}")

    @classmethod
    def of(cls, clauses, num_vars: Optional[int] = None) -> "CnfFormula":
        clauses = tuple(tuple(c) for c in clauses)
        if num_vars is None:
            num_vars = max((abs(l) for c in clauses for l in c), default=0)
        return cls(num_vars, clauses)

    def satisfied_by(self, model) -> bool:
        """``model`` maps variable -> bool (or is a sequence of signed literals)."""
        if not isinstance(model, dict):
            model = {abs(l): l > 0 for l in model}
        return all(any(model.get(abs(l), False) == (l > 0) for l in c) for c in self.clauses)


@dataclass(frozen=True)
class Verdict:
    satisfiable: bool
    model: Optional[tuple[int, ...]] = None  # signed literals for 1..num_vars

    def __str__(self):
        return "SAT" if self.satisfiable else "UNSAT"


def brute_force_sat(f: CnfFormula) -> Verdict:
    """Exhaustive truth-table search; the first model in binary counting order wins."""
    if f.num_vars > BRUTE_FORCE_LIMIT:
        raise TooManyVariables(f"{f.num_vars} variables exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    masks = []
    for clause in f.clauses:
        pos = neg = 0
        for lit in clause:
            if lit > 0:
                pos |= 1 << (lit - 1)
            else:
                neg |= 1 << (-lit - 1)
        masks.append((pos, neg))
    full = (1 << f.num_vars) - 1
    for a in range(1 << f.num_vars):
        na = full & ~a
        if all((a & pos) or (na & neg) for pos, neg in masks):
            model = tuple(v if a >> (v - 1) & 1 else -v for v in range(1, f.num_vars + 1))
            return Verdict(True, model)
    return Verdict(False)


def parse_dimacs(text: Union[bytes, str]) -> CnfFormula:
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError(f"non-ASCII input: {exc}") from exc
    header = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if header is not None:
                raise ParseError("duplicate problem line", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError(f"bad problem line {line!r}", lineno)
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise ParseError(f"bad problem line {line!r}", lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise ParseError("negative counts in problem line", lineno)
            continue
        if header is None:
            raise ParseError("clause before problem line", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"bad literal {tok!r}", lineno) from None
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            elif abs(lit) > header[0]:
                raise ParseError(f"literal {lit} exceeds declared {header[0]} variables", lineno)
            else:
                current.append(lit)
    if header is None:
        raise ParseError("missing problem line")
    if current:
        raise ParseError("last clause is not terminated by 0")
    if len(clauses) != header[1]:
        raise HeaderMismatch(f"header declares {header[1]} clauses, body has {len(clauses)}")
    return CnfFormula(header[0], tuple(clauses))


def emit_dimacs(f: CnfFormula) -> bytes:
    lines = [f"p cnf {f.num_vars} {len(f.clauses)}"]
    lines += [" ".join(map(str, c + (0,))) for c in f.clauses]
    return ("\n".join(lines) + "\n").encode("ascii")


def load_dimacs(path) -> CnfFormula:
    return parse_dimacs(Path(path).read_bytes())


def random_cnf(rng, num_vars: int, num_clauses: int, k: int = 3) -> CnfFormula:
    """Uniform random k-CNF with distinct variables per clause."""
    k = min(k, num_vars)
    clauses = []
    for _ in range(num_clauses):
        vs = rng.sample(range(1, num_vars + 1), k)
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return CnfFormula(num_vars, tuple(clauses))
