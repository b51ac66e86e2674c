import json
import shutil
from pathlib import Path

import pytest

from xswap import parties
from xswap.cli import main
from xswap.scenario import ScenarioError, load_scenario, parse_scenario

ROOT = Path(__file__).resolve().parent.parent
SCEN = ROOT / "scenarios"


def read_jsonl(p):
    return [json.loads(line) for line in Path(p).read_text().splitlines()]


def test_run_three_cycle(tmp_path, capsys):
    assert main(["run", str(SCEN / "three_cycle.json"), "--out", str(tmp_path)]) == 0
    trace = read_jsonl(tmp_path / "trace.jsonl")
    assert sum(1 for r in trace if r["result"].startswith("Triggered")) == 3
    for name in ("verdict.jsonl", "metrics.csv", "summary.txt", "timeline.png"):
        assert (tmp_path / name).exists()
    verdict = read_jsonl(tmp_path / "verdict.jsonl")
    assert verdict[-1] == {"pass": True, "record": "verdict", "run": "all-conforming; latency=max seed=0",
                           "scenario": "three_cycle"}
    parties_ = [r for r in verdict if r["record"] == "party"]
    assert [p["party"] for p in parties_] == ["Alice", "Bob", "Carol"]
    assert {p["outcome"] for p in parties_} == {"DEAL"}
    assert "PASS" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", str(SCEN / "three_cycle.json"), "--latency", "max", "--seed", "7",
                     "--out", str(d)]) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_seeded_runs_repeat(tmp_path):
    outs = []
    for d in ("a", "b"):
        main(["run", str(SCEN / "complete3.json"), "--latency", "seeded", "--seed", "11",
              "--out", str(tmp_path / d), "--no-figures"])
        outs.append((tmp_path / d / "trace.jsonl").read_text())
    assert outs[0] == outs[1]


def test_disconnected_names_pair(tmp_path, capsys):
    assert main(["run", str(SCEN / "disconnected.json"), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "disconnected.json:4:" in err and "Alice is unreachable from Bob" in err


def test_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("text,line,msg", [
    ('{\n "parties": ["A", "B"],\n "arcs": [["A", "B"], ["B", "A"]],\n "strategies": {"A": "Teleport"}\n}',
     4, "unknown strategy"),
    ('{\n "parties": ["A", "B"],\n "arcs": [["A", "B"],\n  ["B", "Z"]]\n}', 4, "unknown party 'Z'"),
    ('{\n "parties": ["A", "B"],\n "arcs": [["A", "B"], ["B", "A"]],\n "epsilon": 1000\n}', 4, "epsilon"),
    ('{\n "parties": ["A", "B"]\n "arcs": []\n}', 3, "invalid JSON"),
    ('{\n "parties": ["A", "B"],\n "arcs": [["A", "B"], ["B", "A"]],\n\n "colour": 1\n}', 5, "unknown key"),
    ('{\n "parties": ["A", "B"],\n "arcs": [["A", "B"], ["B", "A"]],\n "leaders": ["C"]\n}', 4, "unknown party"),
    ('{\n "parties": ["A", "B"],\n "arcs": [\n  {"from": "A", "to": "B", "value_to_head": "lots"},\n  ["B", "A"]]\n}',
     4, "not a rational"),
])
def test_line_anchored_diagnostics(text, line, msg):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(text, "s.json")
    assert e.value.line == line and msg in e.value.msg
    assert str(e.value).startswith(f"s.json:{line}:")


def test_scenario_fields():
    spec = load_scenario(SCEN / "coalition_eager.json")
    assert spec.coalitions == [frozenset({1, 2})]
    assert spec.strategies[2].name == "EagerTrigger"
    spec = load_scenario(SCEN / "follower_crash.json")
    assert spec.strategies[3].label() == "SilentCrash(at_phase=P4)"
    assert spec.checks == ("uniformity", "properties")
    spec = parse_scenario('{"parties": ["A","B"], "arcs": [{"from":"A","to":"B","value_to_head":"5/2"},["B","A"]]}')
    assert str(spec.g.arcs[0].value_to_head) == "5/2"


def test_all_sample_scenarios_run(tmp_path):
    expect = {"three_cycle": 0, "complete3": 0, "two_leader4": 0, "fake_hashlock": 0,
              "follower_crash": 0, "coalition_eager": 0, "disconnected": 2, "under_water_control": 1}
    for f in sorted(SCEN.glob("*.json")):
        code = main(["run", str(f), "--out", str(tmp_path / f.stem), "--no-figures"])
        assert code == expect[f.stem], f.stem


def test_negative_control_run(tmp_path, capsys):
    assert main(["run", str(SCEN / "under_water_control.json"), "--out", str(tmp_path)]) == 1
    assert "party 2: conforming party UNDER_WATER" in capsys.readouterr().out


def test_non_quiescent_exit(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(parties, "simulation_horizon", lambda proto: 50)
    assert main(["run", str(SCEN / "three_cycle.json"), "--out", str(tmp_path)]) == 3
    assert "horizon" in capsys.readouterr().err


def test_run_equilibrium_check(tmp_path):
    code = main(["run", str(SCEN / "three_cycle.json"), "--checks", "equilibrium", "--out",
                 str(tmp_path), "--no-figures"])
    assert code == 0
    rec = [r for r in read_jsonl(tmp_path / "verdict.jsonl") if r.get("check") == "equilibrium"][0]
    assert rec["status"] == "pass" and rec["coalitions_covered"] == "3/3"
    assert main(["run", str(SCEN / "three_cycle.json"), "--checks", "vibes", "--out", str(tmp_path)]) == 2


def test_sweep_default_corpus_unit(tmp_path):
    assert main(["sweep", "--latency", "unit", "--out", str(tmp_path)]) == 0
    recs = read_jsonl(tmp_path / "verdicts.jsonl")
    assert len(recs) == 9 and all(r["pass"] for r in recs)
    for name in ("metrics.csv", "space.csv", "space.png", "completion.png", "outcomes.png", "summary.txt"):
        assert (tmp_path / name).exists()
    assert "688 + 288*n" in (tmp_path / "summary.txt").read_text()


def test_sweep_default_corpus_max_fails_on_boundaries(tmp_path):
    assert main(["sweep", "--out", str(tmp_path), "--no-figures"]) == 1
    recs = {r["scenario"]: r for r in read_jsonl(tmp_path / "verdicts.jsonl")}
    assert recs["complete3"]["checks"]["uniformity_all_conforming"] == "fail"
    assert all(r["checks"]["uniformity_deviations"] == "pass" for r in recs.values())


def test_sweep_with_negative_control(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["export-corpus", str(corpus)]) == 0
    assert len(list(corpus.glob("*.json"))) == 9
    shutil.copy(SCEN / "under_water_control.json", corpus)
    code = main(["sweep", str(corpus), "--latency", "unit", "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 1
    out = capsys.readouterr().out
    assert "witnesses for under_water_control" in out
    recs = {r["scenario"]: r for r in read_jsonl(tmp_path / "o" / "verdicts.jsonl")}
    assert not recs["under_water_control"]["pass"]
    assert all(r["pass"] for k, r in recs.items() if k != "under_water_control")


def test_sweep_coalitions_two(tmp_path):
    corpus = tmp_path / "c"
    corpus.mkdir()
    shutil.copy(SCEN / "three_cycle.json", corpus)
    for k in (1, 2):
        assert main(["sweep", str(corpus), "--latency", "unit", "--coalitions", str(k),
                     "--out", str(tmp_path / f"k{k}"), "--no-figures"]) == 0
    runs = [read_jsonl(tmp_path / f"k{k}" / "verdicts.jsonl")[0]["equilibrium_runs"] for k in (1, 2)]
    assert runs[1] > runs[0]


def test_sweep_parallel_matches_serial(tmp_path):
    main(["sweep", "--latency", "unit", "--out", str(tmp_path / "s"), "--no-figures"])
    main(["sweep", "--latency", "unit", "--jobs", "3", "--out", str(tmp_path / "p"), "--no-figures"])
    assert (tmp_path / "s" / "verdicts.jsonl").read_text() == (tmp_path / "p" / "verdicts.jsonl").read_text()


def test_sweep_empty_corpus(tmp_path):
    assert main(["sweep", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
