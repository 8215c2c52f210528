"""``safecomp`` command line: certify, audit, scenario, inspect, paper-check.

Reports are JSON documents on stdout with sorted keys, so runs are byte-stable.
Exit codes: 0 success, 1 negative verdict or unmet expectation, 2 usage or
input error. A JSON config file (``--config`` or ``$SAFECOMP_CONFIG``) may
set arbiter constants and ``max_steps``.
"""
from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .arbiter import ArbiterConfig
from .certificate import (
    dump_chain,
    dump_projection,
    load_chain,
    load_projection,
    projection_header,
)
from .errors import SafeCompError
from .hashing import decode, encode
from .iterative import Agree, Disagree, FingerprintOnlyMismatch, audit_run, run_to_fixpoint
from .storage import BlobRef
from .tasks import default_registry

CONFIG_ENV = "SAFECOMP_CONFIG"
EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2

CHAIN_FILE = "chain.scc1"
PROJECTION_FILE = "projection.scp1"
FINGERPRINT_FILE = "fingerprint.bin"
RESULT_FILE = "result.bin"
SECRET_FILE = "secret.bin"
BUNDLED = Path(__file__).parent / "scenarios"


class UsageError(Exception):
    pass


def to_jsonable(v: Any) -> Any:
    if isinstance(v, (bytes, bytearray)):
        return bytes(v).hex()
    if isinstance(v, BlobRef):
        return {"blob": v.digest.hex()}
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, Fraction):
        return str(v)
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        out = {"type": type(v).__name__}
        out.update({f.name: to_jsonable(getattr(v, f.name)) for f in dataclasses.fields(v)})
        return out
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (set, frozenset)):
        return sorted(to_jsonable(x) for x in v)
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    return v


def emit(report: dict, out=None) -> None:
    out = out or sys.stdout
    out.write(json.dumps(to_jsonable(report), indent=2, sort_keys=True))
    out.write("\n")


def load_config(path: Optional[str]) -> tuple[ArbiterConfig, dict]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return ArbiterConfig(), {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    extra = {k: doc.pop(k) for k in ("max_steps",) if k in doc}
    try:
        return ArbiterConfig.from_dict(doc), extra
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc


def _task_and_input(args):
    registry = default_registry()
    task = registry.by_name(args.task)
    if task.parse_input is None:
        raise UsageError(f"task {task.name} takes no textual input")
    return task, task.parse_input(args.input)


def _answer(task, r):
    if task.proj is None:
        return None
    try:
        return task.proj(r)
    except Exception:
        return None


def cmd_certify(args) -> int:
    config, extra = load_config(args.config)
    task, d = _task_and_input(args)
    max_steps = args.max_steps or extra.get("max_steps", 1_000_000)
    run = run_to_fixpoint(task, d, max_steps, config.p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CHAIN_FILE).write_bytes(dump_chain(run.chain))
    (out / PROJECTION_FILE).write_bytes(dump_projection(run.cp))
    (out / RESULT_FILE).write_bytes(encode((run.r_n, run.c_n)))
    files = [CHAIN_FILE, PROJECTION_FILE, RESULT_FILE]
    if run.hc is not None:
        (out / FINGERPRINT_FILE).write_bytes(run.hc)
        (out / SECRET_FILE).write_bytes(run.secret)  # private to the solver until reveal
        files += [FINGERPRINT_FILE, SECRET_FILE]
    emit({
        "command": "certify",
        "task": task.name,
        "input": args.input,
        "config": config.to_dict(),
        "result": run.r_n,
        "answer": _answer(task, run.r_n),
        "metrics": {"n": run.n, "certificate_bytes": run.certificate_bytes,
                    "d_0": run.d_0, "d_max": run.d_max},
        "fingerprint": run.hc,
        "files": sorted(files),
        "out_dir": str(out),
    })
    return EXIT_OK


def _read_published(pdir: Path):
    try:
        cp = load_projection((pdir / PROJECTION_FILE).read_bytes())
        r_n, c_n = decode((pdir / RESULT_FILE).read_bytes())
        hc_path = pdir / FINGERPRINT_FILE
        hc = hc_path.read_bytes() if hc_path.exists() else None
    except (OSError, ValueError, TypeError, SafeCompError) as exc:
        raise UsageError(f"malformed published artifacts in {pdir}: {exc}") from exc
    if hc is not None and len(hc) != 32:
        raise UsageError(f"fingerprint in {pdir} is {len(hc)} bytes, expected 32")
    return cp, r_n, c_n, hc


def cmd_audit(args) -> int:
    config, extra = load_config(args.config)
    task, d = _task_and_input(args)
    cp, r_n, c_n, hc = _read_published(Path(args.published))
    max_steps = args.max_steps or extra.get("max_steps", 1_000_000)
    verdict = audit_run(task, d, cp, hc, max_steps, (r_n, c_n))
    report = {"command": "audit", "task": task.name, "input": args.input,
              "published": str(args.published), "config": config.to_dict()}
    if isinstance(verdict, Agree):
        report["verdict"] = "agree"
        code = EXIT_OK
    elif isinstance(verdict, Disagree):
        report["verdict"] = "disagree"
        report["refutation"] = {"i": verdict.index, "first_divergence": verdict.divergence,
                                "r_prev": verdict.r_prev, "c_prev": verdict.c_prev,
                                "c_cur": verdict.c_cur}
        code = EXIT_NEGATIVE
    else:
        assert isinstance(verdict, FingerprintOnlyMismatch)
        report["verdict"] = "fingerprint-only-mismatch"
        code = EXIT_NEGATIVE
    emit(report)
    return code


def cmd_scenario(args) -> int:
    from .agents_sim import Scenario, check_expectations, run_scenario

    path = Path(args.file)
    if not path.exists() and (BUNDLED / f"{args.file}.json").exists():
        path = BUNDLED / f"{args.file}.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read scenario {args.file}: {exc}") from exc
    if args.config or os.environ.get(CONFIG_ENV):
        base, _ = load_config(args.config)
        doc["config"] = {**base.to_dict(), **doc.get("config", {})}
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        sc = Scenario.from_dict(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"bad scenario {args.file}: {exc}") from exc
    report = run_scenario(sc)
    problems = check_expectations(report, sc.expect)
    if args.log:
        Path(args.log).write_bytes(report.log)
    summary = report.summary()
    if not args.events:
        summary.pop("events")
    emit({"command": "scenario", "file": str(args.file), "seed": sc.seed, "config": sc.config.to_dict(),
          "expectations": sc.expect, "violations": problems, **summary})
    if problems:
        print(f"expectation not met: {problems[0]}", file=sys.stderr)
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.file)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    limit = args.limit
    if data[:4] == b"SCC1":
        chain = load_chain(data)
        report = {"format": "SCC1", "n": chain.n, "c0": chain.c0,
                  "certificate_bytes": chain.size_bytes(),
                  "entries": list(chain.entries[:limit])}
    elif data[:4] == b"SCP1":
        p, n = projection_header(data)
        cp = load_projection(data)
        report = {"format": "SCP1", "p": p, "n": n, "items": list(cp.items[:limit])}
    else:
        raise UsageError(f"{path} is neither an SCC1 chain nor an SCP1 projection")
    report.update(command="inspect", file=str(path), shown=min(limit, report["n"]))
    emit(report)
    return EXIT_OK


def cmd_paper_check(args) -> int:
    from .acceptance import run_all

    only = set(args.only) if args.only else None
    results = run_all(only)
    for r in results:
        print(r.line(), file=sys.stderr)
    emit({"command": "paper-check",
          "criteria": [dataclasses.asdict(r) for r in results],
          "passed": all(r.passed for r in results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_NEGATIVE


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="safecomp", description="Certified iterative computation toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")

    p = sub.add_parser("certify", help="run a task to its fixpoint and write certificate files")
    p.add_argument("task")
    p.add_argument("input", help="task input: a literal, or a DIMACS path for dpll")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-steps", type=_positive)
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("audit", help="recompute a task and compare with published artifacts")
    p.add_argument("task")
    p.add_argument("input")
    p.add_argument("published", help="directory written by certify")
    p.add_argument("--max-steps", type=_positive)
    common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("scenario", help="run a multi-agent scenario file")
    p.add_argument("file", help="scenario JSON file, or the name of a bundled scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="write the binary transaction log here")
    p.add_argument("--events", action="store_true", help="include every transaction in the report")
    common(p)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("inspect", help="describe an SCC1 or SCP1 file")
    p.add_argument("file")
    p.add_argument("--limit", type=int, default=8, help="entries to show (default 8)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("paper-check", help="run the acceptance checks")
    p.add_argument("--only", type=int, action="append", choices=range(1, 10), metavar="N",
                   help="run only criterion N (repeatable)")
    p.set_defaults(func=cmd_paper_check)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"safecomp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SafeCompError, ValueError, KeyError) as exc:
        print(f"safecomp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
