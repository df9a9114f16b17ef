import json
import shutil

import pytest

from fabula import cli
from fabula.lm import RecordingProvider, ScriptedProvider
from fabula.runner import run_doc
from fabula.scenario import save_doc

from conftest import SCENARIO_DIR, load_scenario


def scenario_path(stem):
    return str(SCENARIO_DIR / f"{stem}.scenario.json")


def test_run_writes_a_trace_and_exits_zero(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    code = cli.main(["run", scenario_path("drifting_station"), "--out", str(out)])
    assert code == 0
    assert out.exists()
    printed = capsys.readouterr().out
    assert "steps: 2" in printed
    assert f"trace: {out}" in printed


def test_run_twice_produces_identical_bytes(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert cli.main(["run", scenario_path("quiet_meadow"), "--out", str(a)]) == 0
    assert cli.main(["run", scenario_path("quiet_meadow"), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_seed_override_changes_the_header(tmp_path):
    out = tmp_path / "t.jsonl"
    assert cli.main(["run", scenario_path("ridge_signal"),
                     "--seed", "11", "--out", str(out)]) == 0
    header = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert header["payload"]["seed"] == 11


def test_run_invalid_scenario_exits_two(tmp_path, capsys):
    doc = load_scenario("drifting_station")
    doc["engine"] = "turnwise"
    bad = tmp_path / "bad.scenario.json"
    save_doc(doc, bad)
    assert cli.main(["run", str(bad)]) == 2
    assert "UnknownEngine" in capsys.readouterr().err


def test_run_scripted_provider_from_file(tmp_path):
    script = tmp_path / "demo.responses"
    script.write_text("\n".join(load_scenario("drifting_station")["provider"]["responses"]),
                      encoding="utf-8")
    out = tmp_path / "t.jsonl"
    code = cli.main(["run", scenario_path("drifting_station"),
                     "--provider", "scripted", "--script", str(script),
                     "--out", str(out)])
    assert code == 0


def test_run_scripted_provider_requires_a_script(capsys):
    assert cli.main(["run", scenario_path("drifting_station"),
                     "--provider", "scripted"]) == 2
    assert "--script" in capsys.readouterr().err


def test_run_exhausted_script_exits_three(tmp_path, capsys):
    script = tmp_path / "short.responses"
    script.write_text("only one line", encoding="utf-8")
    code = cli.main(["run", scenario_path("drifting_station"),
                     "--provider", "scripted", "--script", str(script)])
    assert code == 3
    assert "run failed" in capsys.readouterr().err


def record_fixture(tmp_path):
    doc = load_scenario("drifting_station")
    cassette = tmp_path / "takes.jsonl"
    trace = tmp_path / "t.jsonl"
    provider = RecordingProvider(ScriptedProvider(list(doc["provider"]["responses"])),
                                 cassette)
    run_doc(doc, provider=provider, out=trace)
    return cassette, trace


def test_replay_identical_exits_zero(tmp_path, capsys):
    cassette, trace = record_fixture(tmp_path)
    code = cli.main(["replay", scenario_path("drifting_station"), str(trace),
                     "--cassette", str(cassette)])
    assert code == 0
    assert "byte-identical" in capsys.readouterr().out


def test_replay_tampered_cassette_exits_four(tmp_path, capsys):
    cassette, trace = record_fixture(tmp_path)
    entries = [json.loads(line) for line in
               cassette.read_text(encoding="utf-8").splitlines()]
    entries[2]["response"] = "something else entirely"
    cassette.write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries),
        encoding="utf-8")
    code = cli.main(["replay", scenario_path("drifting_station"), str(trace),
                     "--cassette", str(cassette)])
    assert code == 4
    err = capsys.readouterr().err
    assert "replay divergence at seq" in err


def test_replay_wrong_scenario_exits_three(tmp_path, capsys):
    cassette, _ = record_fixture(tmp_path)
    other_trace = tmp_path / "other.jsonl"
    run_doc(load_scenario("lantern_house"), out=other_trace)
    code = cli.main(["replay", scenario_path("lantern_house"), str(other_trace),
                     "--cassette", str(cassette)])
    assert code == 3
    assert "replay failed" in capsys.readouterr().err


def test_crossplay_writes_the_matrix(tmp_path, capsys):
    for stem in ("ridge_signal", "harbor_market"):
        shutil.copy(scenario_path(stem), tmp_path / f"{stem}.scenario.json")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "actor_prefabs": ["rational_actor", "basic_actor"],
        "scenarios": ["ridge_signal.scenario.json", "harbor_market.scenario.json"],
        "seeds": [7, 11],
    }), encoding="utf-8")
    out = tmp_path / "matrix.csv"
    assert cli.main(["crossplay", str(spec), "--out", str(out)]) == 0
    rows = out.read_text(encoding="utf-8").splitlines()
    assert len(rows) == 11
    printed = capsys.readouterr().out
    assert "rational_actor: mean=1.0" in printed


def test_crossplay_bad_spec_exits_two(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"actor_prefabs": []}), encoding="utf-8")
    assert cli.main(["crossplay", str(spec)]) == 2
    assert "bad crossplay spec" in capsys.readouterr().err


def test_validate_good_and_bad(tmp_path, capsys):
    assert cli.main(["validate", scenario_path("gatehouse")]) == 0
    assert "scenario is valid" in capsys.readouterr().out
    doc = load_scenario("gatehouse")
    del doc["gm"]
    doc["seed"] = -4
    bad = tmp_path / "bad.scenario.json"
    save_doc(doc, bad)
    assert cli.main(["validate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "NoGm" in err
    assert "InvalidSeed" in err


def test_validate_unparseable_file(tmp_path, capsys):
    path = tmp_path / "junk.scenario.json"
    path.write_text("{not json", encoding="utf-8")
    assert cli.main(["validate", str(path)]) == 2


def test_list_prefabs_prints_the_catalog(capsys):
    assert cli.main(["list-prefabs"]) == 0
    printed = capsys.readouterr().out
    for name in ("basic_actor", "reflective_actor", "rational_actor",
                 "human_actor", "dramatist_gm", "evaluationist_gm",
                 "simulationist_gm"):
        assert name in printed


def test_unknown_command_is_a_parse_error():
    with pytest.raises(SystemExit):
        cli.main(["conjure"])
