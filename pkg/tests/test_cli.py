import json

import pytest

from sublinlab import cli
from sublinlab.errors import ScenarioError
from sublinlab.scenarios import (CSV_HEADER, RunReport, Scenario, csv_text, emit, load_reports,
                                 parse_scenarios, run)

POS_PART = {"id": "pos", "kind": "gnormal",
            "params": {"phi": {"fn": "positive_part", "clip": 8}, "rho": 1, "g": [0.25, 1],
                       "dx": 0.02, "expected": 0.398942, "tol": 0.002}}
NARROW = {"id": "narrow", "kind": "gnormal",
          "params": {"phi": {"fn": "square", "clip": 8}, "rho": 1, "g": [0.25, 1],
                     "grid": {"lo": -4, "hi": 4, "n_points": 81}}}
BATCH = {"id": "batch", "kind": "rosenthal", "params": {"variant": "max_sq", "count": 10}}


def write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


# parsing --------------------------------------------------------------------------

def test_empty_file(tmp_path):
    assert parse_scenarios(write(tmp_path, "")) == []
    assert parse_scenarios(write(tmp_path, "[]")) == []


def test_single_scenario(tmp_path):
    (s,) = parse_scenarios(write(tmp_path, {"scenarios": [POS_PART]}))
    assert s == Scenario("pos", "gnormal", POS_PART["params"])


def test_duplicate_id(tmp_path):
    with pytest.raises(ScenarioError, match="duplicate"):
        parse_scenarios(write(tmp_path, [POS_PART, POS_PART]))


def test_unknown_kind_and_missing_field(tmp_path):
    with pytest.raises(ScenarioError, match="kind"):
        parse_scenarios(write(tmp_path, [{"id": "x", "kind": "nope"}]))
    with pytest.raises(ScenarioError, match="phi"):
        parse_scenarios(write(tmp_path, [{"id": "x", "kind": "gnormal"}]))


def test_syntax_error_reports_position(tmp_path):
    with pytest.raises(ScenarioError, match=r":2:"):
        parse_scenarios(write(tmp_path, '[\n  {"id": }\n]'))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_scenarios(tmp_path / "absent.json")


# running ---------------------------------------------------------------------------

def test_run_empty():
    assert run([]) == []


def test_run_positive_part():
    (rep,) = run([Scenario(**POS_PART)])
    assert rep.status == "pass"
    assert rep.summary["value"] == pytest.approx(0.398942, abs=2e-3)


def test_narrow_grid_is_an_error_and_isolated():
    reps = run([Scenario(**NARROW), Scenario(**POS_PART)], parallelism=2)
    assert [r.status for r in reps] == ["error", "pass"]
    assert "DomainOverflow" in reps[0].message
    assert reps[1].rows == run([Scenario(**POS_PART)])[0].rows


# emission ---------------------------------------------------------------------------

def test_header_only_csv(tmp_path):
    path = emit([], "csv", tmp_path / "r.csv")
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_one_report_one_row():
    rep = RunReport("a", "gnormal", "pass", rows=[{"gap": 0.5}], provenance={"seed": 3, "clip": 8.0})
    lines = csv_text([rep]).splitlines()
    assert len(lines) == 2
    row = dict(zip(CSV_HEADER, lines[1].split(",")))
    assert (row["scenario_id"], row["status"], row["gap"], row["seed"]) == ("a", "pass", "0.5", "3")


def test_json_round_trip(tmp_path):
    reps = run([Scenario(**POS_PART), Scenario(**BATCH)])
    back = load_reports(emit(reps, "json", tmp_path / "r.json"))
    assert back == reps


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit([], "csv", tmp_path / "missing" / "r.csv")


# command line -----------------------------------------------------------------------

def test_cli_run_and_determinism(tmp_path, capsys):
    cfg = write(tmp_path, [POS_PART, BATCH])
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5", "--parallel", "2"]) == 0
    a, b = (tmp_path / d / "report.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    assert "pass  pos (gnormal)" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert cli.main(["run", str(write(tmp_path, [NARROW])), "--out", str(tmp_path)]) == 1
    assert cli.main(["run", str(tmp_path / "absent.json")]) == 2
    assert cli.main(["run", str(write(tmp_path, "{", "bad.json"))]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", str(write(tmp_path, [])), "--out", str(blocker / "sub")]) == 2


def test_cli_json_format(tmp_path):
    assert cli.main(["run", str(write(tmp_path, [POS_PART])), "--out", str(tmp_path), "--format", "json"]) == 0
    (rec,) = json.loads((tmp_path / "report.json").read_text())
    assert set(rec) == {"scenario_id", "kind", "status", "rows", "summary", "provenance", "message"}
    assert "wall_time" in rec["provenance"]


def test_cli_list_kinds(capsys):
    assert cli.main(["list-kinds"]) == 0
    assert "gnormal" in capsys.readouterr().out


def test_parallel_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SUBLINLAB_PARALLEL", "2")
    reps = run([Scenario(**BATCH), Scenario(**POS_PART)])
    monkeypatch.setenv("SUBLINLAB_PARALLEL", "1")
    assert csv_text(reps) == csv_text(run([Scenario(**BATCH), Scenario(**POS_PART)]))
