import json

import pytest

from safecomp import cli
from safecomp.certificate import CertProjection, dump_projection, load_chain, load_projection
from safecomp.hashing import decode, encode
from safecomp.tasks import FactorialState

UNSAT_2VAR = "p cnf 2 4\n1 2 0\n1 -2 0\n-1 2 0\n-1 -2 0\n"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv(cli.CONFIG_ENV, raising=False)


def test_certify_factorial(tmp_path, capsys):
    code, rep, _ = run(capsys, "certify", "factorial", "6", "--out", str(tmp_path))
    assert code == 0
    assert rep["metrics"]["n"] == 6
    assert rep["metrics"]["certificate_bytes"] == 32 * 6
    assert rep["answer"] == 720
    r_n, c_n = decode((tmp_path / cli.RESULT_FILE).read_bytes())
    assert r_n == FactorialState(0, 720)
    chain = load_chain((tmp_path / cli.CHAIN_FILE).read_bytes())
    assert chain.n == 6 and chain.last == c_n
    assert len((tmp_path / cli.FINGERPRINT_FILE).read_bytes()) == 32


def test_certify_dpll_unsat_file(tmp_path, capsys):
    cnf = tmp_path / "unsat.cnf"
    cnf.write_text(UNSAT_2VAR)
    code, rep, _ = run(capsys, "certify", "dpll", str(cnf), "--out", str(tmp_path / "out"))
    assert code == 0 and rep["answer"] is False


def test_certify_errors(tmp_path, capsys):
    assert run(capsys, "certify", "nope", "6", "--out", str(tmp_path))[0] == 2
    assert run(capsys, "certify", "dpll", "p cnf 1 2\n1 0\n", "--out", str(tmp_path))[0] == 2
    code, _, err = run(capsys, "certify", "factorial", "50", "--out", str(tmp_path), "--max-steps", "10")
    assert code == 2 and "StepBudgetExhausted" in err
    assert run(capsys, "certify", "factorial")[0] == 2


def test_audit_own_output_agrees(tmp_path, capsys):
    run(capsys, "certify", "factorial", "12", "--out", str(tmp_path))
    code, rep, _ = run(capsys, "audit", "factorial", "12", str(tmp_path))
    assert code == 0 and rep["verdict"] == "agree"


def test_audit_corrupted_projection(tmp_path, capsys):
    run(capsys, "certify", "factorial", "12", "--out", str(tmp_path))
    cp = load_projection((tmp_path / cli.PROJECTION_FILE).read_bytes())
    k = 5
    items = list(cp.items)
    items[k - 1] ^= 0x8000
    (tmp_path / cli.PROJECTION_FILE).write_bytes(dump_projection(CertProjection(tuple(items), cp.p)))
    (tmp_path / cli.FINGERPRINT_FILE).write_bytes(b"\x11" * 32)
    code, rep, _ = run(capsys, "audit", "factorial", "12", str(tmp_path))
    assert code == 1 and rep["verdict"] == "disagree"
    assert rep["refutation"]["first_divergence"] == k
    assert rep["refutation"]["i"] == k - 1


def test_audit_wrong_input(tmp_path, capsys):
    run(capsys, "certify", "factorial", "12", "--out", str(tmp_path))
    code, rep, _ = run(capsys, "audit", "factorial", "11", str(tmp_path))
    assert code == 1
    assert rep["verdict"] == "fingerprint-only-mismatch" or rep["refutation"]["first_divergence"] == 1


def test_audit_malformed_artifacts(tmp_path, capsys):
    run(capsys, "certify", "factorial", "4", "--out", str(tmp_path))
    (tmp_path / cli.PROJECTION_FILE).write_bytes(b"junk")
    assert run(capsys, "audit", "factorial", "4", str(tmp_path))[0] == 2
    assert run(capsys, "audit", "factorial", "4", str(tmp_path / "missing"))[0] == 2


def test_inspect(tmp_path, capsys):
    run(capsys, "certify", "factorial", "20", "--out", str(tmp_path))
    code, rep, _ = run(capsys, "inspect", str(tmp_path / cli.CHAIN_FILE), "--limit", "3")
    assert code == 0 and rep["format"] == "SCC1" and rep["n"] == 20 and len(rep["entries"]) == 3
    code, rep, _ = run(capsys, "inspect", str(tmp_path / cli.PROJECTION_FILE))
    assert rep["format"] == "SCP1" and rep["p"] == 16 and rep["shown"] == 8
    assert run(capsys, "inspect", str(tmp_path / cli.RESULT_FILE))[0] == 2


@pytest.mark.parametrize("name,status", [
    ("honest-flow", "verified"),
    ("refutation-external", "verified"),
    ("outage", "published"),        # the store never comes back within the run
    ("timeout", "verified"),
    ("adversaries", "verified"),
])
def test_bundled_scenarios(name, status, capsys):
    code, rep, _ = run(capsys, "scenario", name)
    assert code == 0, rep["violations"]
    assert rep["status"] == status


def test_refutation_scenario_accepts_refutation(capsys):
    _, rep, _ = run(capsys, "scenario", "refutation-external", "--events")
    assert any(e["kind"] == "Refute" and e["outcome"][0] == "refutation-accepted" for e in rep["events"])


def test_outage_scenario_declines(capsys):
    _, rep, _ = run(capsys, "scenario", "outage", "--events")
    assert any(e["kind"] == "SubmitSolution" and e["outcome"] == ["error", "BlobUnavailable"]
               for e in rep["events"])


def test_scenario_file_with_unmet_expectation(tmp_path, capsys):
    doc = {"task": "factorial", "input": "5", "agents": [{"id": 1, "behavior": "honest-solver"}],
           "expect": {"status": "published"}}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    code, rep, err = run(capsys, "scenario", str(path))
    assert code == 1 and "status" in err


def test_scenario_reports_are_byte_stable(tmp_path, capsys):
    cli.main(["scenario", "adversaries", "--events", "--log", str(tmp_path / "a.log")])
    first = capsys.readouterr().out
    cli.main(["scenario", "adversaries", "--events", "--log", str(tmp_path / "b.log")])
    assert capsys.readouterr().out == first
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()


def test_config_from_environment(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p": 8, "verification_period": 7}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    code, rep, _ = run(capsys, "certify", "factorial", "6", "--out", str(tmp_path / "o"))
    assert code == 0 and rep["config"]["p"] == 8
    assert load_projection((tmp_path / "o" / cli.PROJECTION_FILE).read_bytes()).p == 8
    code, rep, _ = run(capsys, "scenario", "honest-flow")
    assert code == 0 and rep["config"]["verification_period"] == 7


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "certify", "factorial", "3", "--out", str(tmp_path), "--config", str(cfg))[0] == 2


def test_acceptance_command_single_criterion(capsys):
    code, rep, err = run(capsys, "paper-check", "--only", "1")
    assert code == 0 and rep["passed"]
    assert err.startswith("[PASS] 1.")


def test_jsonable_encoding():
    assert cli.to_jsonable({"b": b"\x01", "s": {3, 1}, "f": FactorialState(1, 2)}) == \
        {"b": "01", "s": [1, 3], "f": {"type": "FactorialState", "n": 1, "acc": 2}}
    assert encode(1)  # sanity: module import path works
