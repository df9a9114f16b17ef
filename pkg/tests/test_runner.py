import copy
import csv
import io
import json

import pytest

from fabula.errors import CassetteMiss
from fabula.lm import RecordingProvider, ScriptedProvider
from fabula.runner import (
    CROSSPLAY_COLUMNS,
    CrossplaySpec,
    crossplay,
    crossplay_csv,
    first_divergence,
    replay_doc,
    run_doc,
    summarize,
    swap_focal,
)
from fabula.scenario import scenario_digest

from conftest import SCENARIO_DIR, load_scenario


def header(artifacts):
    return json.loads(artifacts.lines[0])


# -- running documents -------------------------------------------------------


def test_run_doc_is_repeatable():
    doc = load_scenario("drifting_station")
    first = run_doc(doc)
    second = run_doc(doc)
    assert first.lines == second.lines
    assert first.result.steps == 2


def test_run_doc_writes_the_trace_file(tmp_path):
    out = tmp_path / "run.jsonl"
    artifacts = run_doc(load_scenario("drifting_station"), out=out)
    assert out.read_text(encoding="utf-8") == "\n".join(artifacts.lines) + "\n"


def test_overrides_land_in_the_header_and_digest():
    doc = load_scenario("information_asymmetry")
    artifacts = run_doc(doc, seed=99, max_steps=1)
    head = header(artifacts)
    assert head["payload"]["seed"] == 99
    assert head["payload"]["max_steps"] == 1
    expected = dict(doc, seed=99, max_steps=1)
    assert head["payload"]["scenario_digest"] == scenario_digest(expected)
    assert head["payload"]["scenario_digest"] != scenario_digest(doc)


def test_run_doc_does_not_mutate_the_doc():
    doc = load_scenario("drifting_station")
    snapshot = copy.deepcopy(doc)
    run_doc(doc, seed=3)
    assert doc == snapshot


def test_focal_scores_mirror_the_footer():
    artifacts = run_doc(load_scenario("ridge_signal"))
    footer = json.loads(artifacts.lines[-1])
    assert artifacts.focal_scores == footer["payload"]["scores"]
    assert artifacts.focal_scores["Scout"]["mean"] == 1.0


# -- divergence --------------------------------------------------------------


def test_first_divergence_on_identical_lists():
    assert first_divergence(["a", "b"], ["a", "b"]) is None


def test_first_divergence_reports_first_mismatch():
    assert first_divergence(["a", "b", "c"], ["a", "x", "c"]) == 1


def test_first_divergence_on_length_mismatch():
    assert first_divergence(["a", "b", "c"], ["a", "b"]) == 2
    assert first_divergence(["a"], ["a", "b"]) == 1


# -- record and replay ---------------------------------------------------------


def scripted_lines(doc):
    return list(doc["provider"]["responses"])


def test_record_then_replay_reproduces_the_trace(tmp_path):
    doc = load_scenario("drifting_station")
    cassette = tmp_path / "takes.jsonl"
    recording = RecordingProvider(ScriptedProvider(scripted_lines(doc)), cassette)
    recorded = run_doc(doc, provider=recording)

    divergence, replayed = replay_doc(doc, cassette, recorded.lines)
    assert divergence is None
    assert replayed.lines == recorded.lines


def test_tampered_cassette_reports_first_divergent_seq(tmp_path):
    doc = load_scenario("drifting_station")
    cassette = tmp_path / "takes.jsonl"
    recording = RecordingProvider(ScriptedProvider(scripted_lines(doc)), cassette)
    recorded = run_doc(doc, provider=recording)

    entries = [json.loads(line) for line in
               cassette.read_text(encoding="utf-8").splitlines()]
    original = entries[1]["response"]
    entries[1]["response"] = "a rewritten take"
    cassette.write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries),
        encoding="utf-8")

    # the first trace line the tampered call touches is its own lm_call record
    oracle = next(e["seq"] for e in map(json.loads, recorded.lines)
                  if e["kind"] == "lm_call" and e["payload"]["response"] == original)
    divergence, _ = replay_doc(doc, cassette, recorded.lines)
    assert divergence == oracle


def test_replaying_the_wrong_scenario_misses_the_cassette(tmp_path):
    doc = load_scenario("drifting_station")
    cassette = tmp_path / "takes.jsonl"
    recording = RecordingProvider(ScriptedProvider(scripted_lines(doc)), cassette)
    run_doc(doc, provider=recording)

    other = load_scenario("lantern_house")
    with pytest.raises(CassetteMiss):
        replay_doc(other, cassette, [])


# -- focal swapping -------------------------------------------------------------


def test_swap_focal_keeps_only_declared_overrides():
    doc = load_scenario("ridge_signal")
    swapped = swap_focal(doc, 0, "basic_actor")
    assert swapped["actors"][0]["prefab"] == "basic_actor"
    assert "utilities" not in swapped["actors"][0]["overrides"]
    kept = swap_focal(doc, 0, "rational_actor")
    assert "utilities" in kept["actors"][0]["overrides"]


def test_swap_focal_leaves_the_original_untouched():
    doc = load_scenario("ridge_signal")
    snapshot = copy.deepcopy(doc)
    swap_focal(doc, 0, "basic_actor")
    assert doc == snapshot


def test_swap_focal_range_check():
    with pytest.raises(ValueError):
        swap_focal(load_scenario("ridge_signal"), 5, "basic_actor")


# -- crossplay -------------------------------------------------------------------


CROSSPLAY_SPEC = CrossplaySpec(
    actor_prefabs=("rational_actor", "basic_actor"),
    scenarios=("ridge_signal.scenario.json", "harbor_market.scenario.json"),
    seeds=(7, 11),
)


def test_crossplay_matrix_shape_and_means():
    rows = crossplay(CROSSPLAY_SPEC, base_dir=SCENARIO_DIR)
    assert len(rows) == 10
    data = [r for r in rows if r["status"] == "ok"]
    means = [r for r in rows if r["status"] == "mean"]
    assert len(data) == 8
    assert len(means) == 2
    assert all(r["status"] == "ok" for r in data)
    by_focal = {r["focal"]: r["total_score"] for r in means}
    assert by_focal == {"rational_actor": 1.0, "basic_actor": 0.0}
    # every cell is present exactly once
    cells = {(r["focal"], r["scenario"], r["seed"]) for r in data}
    assert len(cells) == 8


def test_crossplay_csv_is_stable_across_reruns():
    first = crossplay_csv(crossplay(CROSSPLAY_SPEC, base_dir=SCENARIO_DIR))
    second = crossplay_csv(crossplay(CROSSPLAY_SPEC, base_dir=SCENARIO_DIR))
    assert first == second
    parsed = list(csv.reader(io.StringIO(first)))
    assert parsed[0] == list(CROSSPLAY_COLUMNS)
    assert len(parsed) == 11


def test_crossplay_records_failures_without_aborting():
    spec = CrossplaySpec(("rational_actor",), ("missing.scenario.json",), (7,))
    rows = crossplay(spec, base_dir=SCENARIO_DIR)
    assert [r["status"] for r in rows] == ["failed", "mean"]
    assert rows[1]["total_score"] == ""


def test_crossplay_spec_validation():
    with pytest.raises(ValueError):
        CrossplaySpec((), ("s",), (7,))
    with pytest.raises(ValueError):
        CrossplaySpec(("basic_actor",), ("s",), (7,), focal_slot=-1)
    spec = CrossplaySpec.from_dict({"actor_prefabs": ["a"], "scenarios": ["s"],
                                    "seeds": [7, 11]})
    assert spec.seeds == (7, 11)
    assert spec.focal_slot == 0


# -- summaries -----------------------------------------------------------------


def test_summarize_reports_steps_and_scores():
    artifacts = run_doc(load_scenario("ridge_signal"))
    text = summarize(artifacts.result)
    lines = text.splitlines()
    assert lines[0] == "steps: 2"
    assert lines[1].startswith("reason: ")
    assert any(line.startswith("score Scout: total=2.0000 mean=1.0000")
               for line in lines)
