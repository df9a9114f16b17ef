import copy

import pytest

import fabula.prefabs
from fabula.engines import EngineKind
from fabula.errors import ScenarioValidationError
from fabula.kernel import OutputType
from fabula.prefabs import Prefab, register_prefab
from fabula.scenario import (
    canonical_doc,
    instantiate,
    load_doc,
    scenario_digest,
    validate,
)

from conftest import SCENARIO_DIR, load_scenario


def base_doc():
    return {
        "version": 1,
        "name": "test scenario",
        "engine": "simultaneous",
        "premise": "Rain hammers the tin roof.",
        "max_steps": 3,
        "seed": 7,
        "actors": [
            {"name": "Ada", "prefab": "basic_actor"},
            {"name": "Bo", "prefab": "basic_actor"},
        ],
        "gm": {"name": "GM", "prefab": "evaluationist_gm"},
    }


def codes(doc):
    return [(i.path, i.code) for i in validate(doc)]


def only_code(doc):
    report = validate(doc)
    assert len(report) == 1, report
    return report[0].path, report[0].code


# -- bundled documents ----------------------------------------------------------


def test_bundled_scenarios_validate_and_round_trip():
    paths = sorted(SCENARIO_DIR.glob("*.scenario.json"))
    assert len(paths) == 8
    for path in paths:
        raw = path.read_text(encoding="utf-8")
        doc = load_doc(path)
        assert validate(doc) == [], path.name
        assert canonical_doc(doc) == raw, path.name


def test_bundled_engines_cover_all_three_kinds():
    engines = {load_scenario(p.name.removesuffix(".scenario.json"))["engine"]
               for p in SCENARIO_DIR.glob("*.scenario.json")}
    assert engines == {"simultaneous", "sequential", "asynchronous"}


# -- field validation -----------------------------------------------------------


def test_good_doc_has_no_issues():
    assert validate(base_doc()) == []


def test_version_must_match():
    doc = base_doc()
    doc["version"] = 2
    assert only_code(doc) == ("version", "UnsupportedVersion")


def test_unknown_engine():
    doc = base_doc()
    doc["engine"] = "turnwise"
    assert only_code(doc) == ("engine", "UnknownEngine")


def test_empty_premise():
    doc = base_doc()
    doc["premise"] = ""
    assert only_code(doc) == ("premise", "InvalidPremise")


@pytest.mark.parametrize("bad", [0, -2, True, "3", None])
def test_invalid_max_steps(bad):
    doc = base_doc()
    doc["max_steps"] = bad
    assert only_code(doc) == ("max_steps", "InvalidMaxSteps")


@pytest.mark.parametrize("bad", [-1, 1.5, False, None])
def test_invalid_seed(bad):
    doc = base_doc()
    doc["seed"] = bad
    assert only_code(doc) == ("seed", "InvalidSeed")


def test_provider_must_be_an_object():
    doc = base_doc()
    doc["provider"] = "fast"
    assert only_code(doc) == ("provider", "InvalidProvider")


def test_unknown_provider_kind():
    doc = base_doc()
    doc["provider"] = {"kind": "quantum"}
    assert only_code(doc) == ("provider.kind", "UnknownProvider")


def test_actors_must_be_non_empty():
    doc = base_doc()
    doc["actors"] = []
    assert only_code(doc) == ("actors", "NoActors")


def test_actor_entry_must_be_an_object():
    doc = base_doc()
    doc["actors"][1] = 42
    assert only_code(doc) == ("actors[1]", "InvalidEntry")


def test_unresolved_prefab():
    doc = base_doc()
    doc["actors"][0]["prefab"] = "wizard_gm"
    assert only_code(doc) == ("actors[0].prefab", "UnresolvedPrefab")


def test_role_mismatch():
    doc = base_doc()
    doc["actors"][0]["prefab"] = "dramatist_gm"
    assert only_code(doc) == ("actors[0].prefab", "RoleMismatch")


def test_invalid_overrides_shape():
    doc = base_doc()
    doc["actors"][0]["overrides"] = ["persona"]
    assert only_code(doc) == ("actors[0].overrides", "InvalidOverrides")


def test_unknown_override_parameter():
    doc = base_doc()
    doc["actors"][0]["overrides"] = {"wings": 2}
    assert only_code(doc) == ("actors[0].overrides", "UnknownParameter")


def test_override_type_mismatch():
    doc = base_doc()
    doc["gm"]["overrides"] = {"rubric": 99}
    assert only_code(doc) == ("gm.overrides", "TypeMismatch")


def test_duplicate_actor_names_report_both_paths():
    doc = base_doc()
    doc["actors"].append({"name": "Ada", "prefab": "basic_actor"})
    assert only_code(doc) == ("actors[0], actors[2]", "DuplicateName")


def test_gm_name_may_not_shadow_an_actor():
    doc = base_doc()
    doc["gm"]["name"] = "Bo"
    assert only_code(doc) == ("actors[1], gm", "DuplicateName")


def test_missing_gm():
    doc = base_doc()
    del doc["gm"]
    assert only_code(doc) == ("gm", "NoGm")


def test_rotation_must_be_a_name_list():
    doc = base_doc()
    doc["engine"] = "sequential"
    doc["rotation"] = "Ada"
    assert only_code(doc) == ("rotation", "InvalidRotation")


def test_rotation_names_must_be_actors():
    doc = base_doc()
    doc["rotation"] = ["Ada", "Nobody"]
    assert only_code(doc) == ("rotation[1]", "UnknownActor")


def test_action_spec_must_be_an_object():
    doc = base_doc()
    doc["action_spec"] = 5
    assert only_code(doc) == ("action_spec", "InvalidActionSpec")


def test_unknown_output_type():
    doc = base_doc()
    doc["action_spec"] = {"output_type": "melody"}
    assert only_code(doc) == ("action_spec.output_type", "UnknownOutputType")


@pytest.mark.parametrize("options", [[], ["go", "go"], ["go", ""], "go"])
def test_choice_options_must_be_unique_non_empty_strings(options):
    doc = base_doc()
    doc["action_spec"] = {"output_type": "choice", "options": options}
    assert only_code(doc) == ("action_spec.options", "InvalidOptions")


def test_free_spec_may_not_carry_options():
    doc = base_doc()
    doc["action_spec"] = {"output_type": "free", "options": ["go"]}
    assert only_code(doc) == ("action_spec.options", "InvalidOptions")


def test_blank_call_to_action_rejected():
    doc = base_doc()
    doc["action_spec"] = {"call_to_action": ""}
    assert only_code(doc) == ("action_spec.call_to_action", "InvalidCallToAction")


def test_asynchronous_gm_needs_a_scheduler():
    doc = base_doc()
    doc["engine"] = "asynchronous"
    assert only_code(doc) == ("gm.prefab", "MissingGmComponent")


def test_sequential_gm_without_next_acting_needs_rotation():
    bare = Prefab("test_bare_gm", "gm", "resolver only", [("event_resolver", {})])
    register_prefab(bare)
    try:
        doc = base_doc()
        doc["engine"] = "sequential"
        doc["gm"]["prefab"] = "test_bare_gm"
        assert only_code(doc) == ("gm.prefab", "MissingGmComponent")
        doc["rotation"] = ["Ada", "Bo"]
        assert validate(doc) == []
    finally:
        fabula.prefabs._PREFABS.pop("test_bare_gm")


def test_validation_aggregates_every_problem():
    doc = base_doc()
    doc["version"] = 9
    doc["premise"] = ""
    doc["actors"][0]["prefab"] = "wizard_gm"
    found = {code for _, code in codes(doc)}
    assert found == {"UnsupportedVersion", "InvalidPremise", "UnresolvedPrefab"}


# -- digest --------------------------------------------------------------------


def test_digest_ignores_the_provider_section():
    doc = base_doc()
    bare = scenario_digest(doc)
    doc["provider"] = {"kind": "scripted", "lines": ["x"]}
    assert scenario_digest(doc) == bare
    doc["premise"] = "Snow instead."
    assert scenario_digest(doc) != bare


def test_digest_is_order_independent():
    doc = base_doc()
    shuffled = dict(reversed(list(doc.items())))
    assert scenario_digest(shuffled) == scenario_digest(doc)


# -- instantiation --------------------------------------------------------------


def test_instantiate_builds_entities_and_config():
    doc = base_doc()
    doc["actors"][0]["overrides"] = {"persona": "a tired miller"}
    doc["rotation"] = ["Bo", "Ada"]
    doc["action_spec"] = {"call_to_action": "Choose a move for {name}.",
                          "output_type": "choice", "options": ["hold", "advance"]}
    actors, gm, config = instantiate(doc)
    assert [a.name for a in actors] == ["Ada", "Bo"]
    assert actors[0].find("persona").text == "a tired miller"
    assert gm.name == "GM"
    assert config.engine is EngineKind.SIMULTANEOUS
    assert config.premise == doc["premise"]
    assert config.max_steps == 3
    assert config.seed == 7
    assert config.rotation == ("Bo", "Ada")
    assert config.action_output_type is OutputType.CHOICE
    assert config.action_options == ("hold", "advance")
    assert config.call_to_action == "Choose a move for {name}."


def test_instantiate_defaults_the_action_spec():
    _, _, config = instantiate(base_doc())
    assert config.action_output_type is OutputType.FREE
    assert config.action_options == ()
    assert config.call_to_action == "What does {name} do next?"
    assert config.rotation is None


def test_entity_name_falls_back_to_prefab_name():
    doc = base_doc()
    doc["actors"][1] = {"prefab": "rational_actor"}
    actors, _, _ = instantiate(doc)
    assert actors[1].name == "rational_actor"


def test_instantiate_rejects_invalid_docs_with_full_report():
    doc = base_doc()
    doc["version"] = 9
    doc["seed"] = -1
    with pytest.raises(ScenarioValidationError) as excinfo:
        instantiate(doc)
    report_codes = {i.code for i in excinfo.value.report}
    assert report_codes == {"UnsupportedVersion", "InvalidSeed"}


def test_instantiate_does_not_mutate_the_doc():
    doc = base_doc()
    snapshot = copy.deepcopy(doc)
    instantiate(doc)
    assert doc == snapshot
