import json
import subprocess
import sys
import time

import pytest

from conftest import gp
from planinfer import cli
from planinfer.formats import (
    SchemaError,
    apply_predicate_map,
    fixture_path,
    plan_from_json,
    plan_to_json,
    session_from_json,
    session_to_json,
    write_json,
)
from planinfer.model import Session, Utterance

DOM = str(fixture_path("rescue.domain.pddl"))
PROB = str(fixture_path("rescue.problem.pddl"))
PLAN = str(fixture_path("rescue.plan.json"))


def run(capsys, *args):
    code = cli.main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_session_round_trip():
    data = {"utterances": [[[["st", "br", "b"], ["st", "rr", "a"]], [["k", "rm", "a"]]], [[["x"]]]]}
    s = session_from_json(data)
    assert session_from_json(session_to_json(s)) == s
    assert session_to_json(s) == data


def test_plan_round_trip(true_plan):
    assert plan_from_json(plan_to_json(true_plan)) == true_plan
    assert plan_from_json({"true_plan": plan_to_json(true_plan)}) == true_plan
    assert plan_from_json({"map_plan": plan_to_json(true_plan)}) == true_plan


@pytest.mark.parametrize("bad", [{}, {"utterances": []}, {"utterances": [[]]}, {"utterances": [[[]]]},
                                 {"utterances": [[[[1, 2]]]]}, {"utterances": [[[[]]]]}])
def test_session_schema_errors(bad):
    with pytest.raises(SchemaError):
        session_from_json(bad)


def test_atomic_write(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {"a": 1})
    assert json.loads(path.read_text()) == {"a": 1}
    with pytest.raises(TypeError):
        write_json(path, {"a": object()})
    assert json.loads(path.read_text()) == {"a": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]


def test_predicate_map(domain, problem):
    mapping = {"ST": [{"types": ["robot", "room"], "action": "inspect"},
                      {"types": ["medic", "room"], "action": "assess"}]}
    s = Session((Utterance((frozenset({gp("st(rr,a)"), gp("st(rm,b)"), gp("other(x)")}),)),))
    out = apply_predicate_map(s, mapping, domain, problem)
    assert {p for p, _ in out.utterances[0].flattened} == {gp("inspect(rr,a)"), gp("assess(rm,b)"), gp("other(x)")}


def test_validate_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", DOM, PROB, PLAN)
    assert code == 0 and json.loads(out)["valid"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"steps": [[["assess", "rm", "a"]]]}))
    code, out, _ = run(capsys, "validate", DOM, PROB, bad)
    assert code == 2 and json.loads(out)["failure"]["reason"] == "PreconditionUnsatisfied"
    code, _, err = run(capsys, "validate", DOM, PROB, tmp_path / "missing.json")
    assert code == 1 and "missing.json" in err
    unknown = tmp_path / "u.json"
    steps = json.loads(open(PLAN).read())["steps"]
    unknown.write_text(json.dumps({"steps": [steps[0] + [["teleport", "rr", "a"]]] + steps[1:]}))
    assert run(capsys, "validate", DOM, PROB, unknown, "--strict-actions")[0] == 2
    assert run(capsys, "validate", DOM, PROB, unknown, "--ignore-unknown")[0] == 0


def test_simulate_then_infer_then_evaluate(capsys, tmp_path):
    s, t = tmp_path / "s.json", tmp_path / "t.json"
    t0 = time.perf_counter()
    code, _, _ = run(capsys, "simulate", PLAN, "--distractors", "4", "--seed", "3",
                     "--out-session", s, "--out-truth", t)
    assert code == 0 and time.perf_counter() - t0 < 1.0
    truth = json.loads(t.read_text())
    assert len(truth["universe"]) == 20
    out1, out2 = tmp_path / "o1.json", tmp_path / "o2.json"
    for out in (out1, out2):
        code, _, _ = run(capsys, "infer", s, "--domain", DOM, "--problem", PROB, "--gibbs", "30", "--mh", "40",
                         "--thin", "4", "--seed", "5", "--out", out)
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()
    summary = json.loads(out1.read_text())
    assert {"map_plan", "samples", "marginals", "diagnostics"} <= set(summary)
    assert {"acceptance_rate", "retained"} <= set(summary["diagnostics"])
    for mode in ("map", "mean-over-samples"):
        code, out, _ = run(capsys, "evaluate", out1, t, s, "--score", mode)
        assert code == 0
        m = json.loads(out)
        assert list(m) == ["pct_inferred", "pct_noise_rej", "pct_seq", "overall"]


def test_infer_no_pddl_and_env_seed(capsys, tmp_path, monkeypatch):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"utterances": [[[["a"]], [["b"]]], [[["b"]]]]}))
    monkeypatch.setenv("PLANINFER_SEED", "7")
    o1, o2 = tmp_path / "1.json", tmp_path / "2.json"
    assert run(capsys, "infer", s, "--no-pddl", "--gibbs", "20", "--mh", "20", "--out", o1)[0] == 0
    assert run(capsys, "infer", s, "--no-pddl", "--gibbs", "20", "--mh", "20", "--seed", "7", "--out", o2)[0] == 0
    assert o1.read_bytes() == o2.read_bytes()
    assert run(capsys, "infer", s, "--gibbs", "20")[0] == 1  # PDDL pair required
    assert run(capsys, "infer", s, "--no-pddl", "--domain", DOM, "--gibbs", "20")[0] == 1
    monkeypatch.setenv("PLANINFER_SEED", "x")
    assert run(capsys, "infer", s, "--no-pddl", "--gibbs", "20")[0] == 1


def test_infer_gibbs_kernel(capsys, tmp_path):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"utterances": [[[["a"]], [["b"]]], [[["b"]]]]}))
    code, out, _ = run(capsys, "infer", s, "--no-pddl", "--gibbs", "20", "--mh", "20", "--kernel", "gibbs")
    assert code == 0 and json.loads(out)["diagnostics"]["retained"] == 10 * 1
    with pytest.raises(SystemExit):
        run(capsys, "infer", s, "--no-pddl", "--kernel", "nope")


def test_infer_rejects_empty_session(capsys, tmp_path):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"utterances": []}))
    assert run(capsys, "infer", s, "--no-pddl")[0] == 1


def test_simulate_needs_utterances(capsys, tmp_path):
    assert run(capsys, "simulate", PLAN, "--utterances", "0")[0] == 1
    bad = tmp_path / "p.json"
    bad.write_text("{not json")
    assert run(capsys, "simulate", bad)[0] == 1


def test_evaluate_examples(capsys, tmp_path):
    def write(name, data):
        p = tmp_path / name
        p.write_text(json.dumps(data))
        return p

    truth = write("t.json", {"steps": [[["a"]], [["b"]], [["d"]]]})
    inferred = write("i.json", {"steps": [[["a"]], [["b"]], [["c"]]]})
    session = write("s.json", {"utterances": [[[["a"], ["b"], ["c"], ["d"], ["e"]]]]})
    code, out, _ = run(capsys, "evaluate", inferred, truth, session)
    m = json.loads(out)
    assert code == 0 and m["pct_inferred"] == pytest.approx(66.6667, abs=1e-3) and m["pct_noise_rej"] == 50.0
    same = write("s2.json", {"utterances": [[[["a"], ["b"], ["d"]]]]})
    code, out, _ = run(capsys, "evaluate", truth, truth, same)
    assert set(json.loads(out).values()) == {100.0}
    assert run(capsys, "evaluate", inferred, write("e.json", {"steps": []}), session)[0] == 1


def test_exact_command(capsys, tmp_path):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"utterances": [[[["a"]], [["b"]]]]}))
    code, out, _ = run(capsys, "exact", s, "--no-pddl")
    post = json.loads(out)["posterior"]
    assert code == 0 and len(post) == 6  # five non-empty plans plus the impossible empty one
    assert post[-1] == {"plan": {"steps": []}, "probability": 0.0}
    assert sum(p["probability"] for p in post) == pytest.approx(1.0)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "planinfer.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "planinfer" in r.stdout
