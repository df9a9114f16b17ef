"""Scenario documents: validation, canonical form, and instantiation.

A scenario is a canonical-JSON document naming an engine, a premise, a
provider, and prefab-based entity definitions. Validation aggregates
every problem with its document path; instantiation yields built
entities plus a run configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .canonical import canonical_json, sha256_hex
from .engines import EngineKind, RunConfig
from .errors import (
    InvalidSchema,
    ScenarioValidationError,
    TypeMismatch,
    UnknownParameter,
)
from .kernel import Entity, OutputType
from .prefabs import ROLE_ACTOR, ROLE_GM, Prefab, get_prefab

SUPPORTED_VERSION = 1

_ENGINE_NAMES = {kind.value: kind for kind in EngineKind}
_OUTPUT_NAMES = {t.value: t for t in OutputType}
_PROVIDER_KINDS = {"scripted", "echo", "echo_hash", "record", "replay", "remote"}


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.code}] {self.message}"


def load_doc(path: str | Path) -> dict:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidSchema(f"could not parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidSchema(f"{path} must contain a JSON object")
    return doc


def canonical_doc(doc: dict) -> str:
    return canonical_json(doc)


def scenario_digest(doc: dict) -> str:
    """Digest over everything except the provider section.

    The provider block changes between a recording run and its replay;
    keeping it out of the digest lets both runs share a header.
    """
    return sha256_hex(canonical_json({k: v for k, v in doc.items() if k != "provider"}))


def save_doc(doc: dict, path: str | Path) -> None:
    Path(path).write_text(canonical_doc(doc), encoding="utf-8")


def _entity_name(entry: dict, fallback: str) -> str:
    name = entry.get("name", entry.get("prefab", fallback))
    return name if isinstance(name, str) else fallback


def validate(doc: dict) -> list[ValidationIssue]:
    """Every problem in the document, with its path; empty iff instantiable."""
    issues: list[ValidationIssue] = []

    def issue(path: str, code: str, message: str) -> None:
        issues.append(ValidationIssue(path, code, message))

    version = doc.get("version")
    if version != SUPPORTED_VERSION:
        issue("version", "UnsupportedVersion",
              f"expected version {SUPPORTED_VERSION}, got {version!r}")

    engine_name = doc.get("engine")
    engine = _ENGINE_NAMES.get(engine_name)
    if engine is None:
        issue("engine", "UnknownEngine",
              f"engine must be one of {sorted(_ENGINE_NAMES)}, got {engine_name!r}")

    premise = doc.get("premise")
    if not isinstance(premise, str) or not premise:
        issue("premise", "InvalidPremise", "premise must be a non-empty string")

    max_steps = doc.get("max_steps")
    if not isinstance(max_steps, int) or isinstance(max_steps, bool) or max_steps < 1:
        issue("max_steps", "InvalidMaxSteps", "max_steps must be an integer >= 1")

    seed = doc.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        issue("seed", "InvalidSeed", "seed must be a nonnegative integer")

    provider = doc.get("provider")
    if provider is not None:
        if not isinstance(provider, dict):
            issue("provider", "InvalidProvider", "provider must be an object")
        elif provider.get("kind", "echo") not in _PROVIDER_KINDS:
            issue("provider.kind", "UnknownProvider",
                  f"provider kind must be one of {sorted(_PROVIDER_KINDS)}")

    def check_entry(entry: Any, path: str, role: str) -> Optional[Prefab]:
        if not isinstance(entry, dict):
            issue(path, "InvalidEntry", "must be an object with a prefab reference")
            return None
        prefab_name = entry.get("prefab")
        if not isinstance(prefab_name, str):
            issue(f"{path}.prefab", "UnresolvedPrefab", "prefab name must be a string")
            return None
        prefab = get_prefab(prefab_name)
        if prefab is None:
            issue(f"{path}.prefab", "UnresolvedPrefab",
                  f"no prefab named {prefab_name!r}")
            return None
        if prefab.role != role:
            issue(f"{path}.prefab", "RoleMismatch",
                  f"prefab {prefab_name!r} has role {prefab.role!r}, expected {role!r}")
        overrides = entry.get("overrides", {})
        if not isinstance(overrides, dict):
            issue(f"{path}.overrides", "InvalidOverrides", "overrides must be an object")
        else:
            try:
                prefab.check_overrides(overrides)
            except UnknownParameter as exc:
                issue(f"{path}.overrides", "UnknownParameter", str(exc))
            except TypeMismatch as exc:
                issue(f"{path}.overrides", "TypeMismatch", str(exc))
        return prefab

    actors = doc.get("actors")
    actor_names: list[tuple[str, str]] = []
    if not isinstance(actors, list) or not actors:
        issue("actors", "NoActors", "actors must be a non-empty list")
        actors = []
    for i, entry in enumerate(actors):
        path = f"actors[{i}]"
        check_entry(entry, path, ROLE_ACTOR)
        if isinstance(entry, dict):
            actor_names.append((_entity_name(entry, f"actor{i}"), path))

    seen: dict[str, str] = {}
    for name, path in actor_names:
        if name in seen:
            issue(f"{seen[name]}, {path}", "DuplicateName",
                  f"entity name {name!r} is used more than once")
        else:
            seen[name] = path

    gm_entry = doc.get("gm")
    gm_prefab: Optional[Prefab] = None
    if not isinstance(gm_entry, dict):
        issue("gm", "NoGm", "exactly one gm entry is required")
    else:
        gm_prefab = check_entry(gm_entry, "gm", ROLE_GM)
        gm_name = _entity_name(gm_entry, "gm")
        if gm_name in seen:
            issue(f"{seen[gm_name]}, gm", "DuplicateName",
                  f"entity name {gm_name!r} is used more than once")

    rotation = doc.get("rotation")
    if rotation is not None:
        if not isinstance(rotation, list) or not all(isinstance(r, str) for r in rotation):
            issue("rotation", "InvalidRotation", "rotation must be a list of actor names")
        else:
            known = {name for name, _ in actor_names}
            for i, name in enumerate(rotation):
                if name not in known:
                    issue(f"rotation[{i}]", "UnknownActor",
                          f"{name!r} is not an actor in this scenario")

    action_spec = doc.get("action_spec")
    if action_spec is not None:
        if not isinstance(action_spec, dict):
            issue("action_spec", "InvalidActionSpec", "action_spec must be an object")
        else:
            output_type = action_spec.get("output_type", "free")
            if output_type not in _OUTPUT_NAMES:
                issue("action_spec.output_type", "UnknownOutputType",
                      f"must be one of {sorted(_OUTPUT_NAMES)}")
            options = action_spec.get("options", [])
            if output_type == "choice":
                if (not isinstance(options, list) or not options
                        or len(set(options)) != len(options)
                        or not all(isinstance(o, str) and o for o in options)):
                    issue("action_spec.options", "InvalidOptions",
                          "choice requires unique, non-empty string options")
            elif options:
                issue("action_spec.options", "InvalidOptions",
                      f"{output_type} action_spec must not carry options")
            cta = action_spec.get("call_to_action")
            if cta is not None and (not isinstance(cta, str) or not cta):
                issue("action_spec.call_to_action", "InvalidCallToAction",
                      "call_to_action must be a non-empty string")

    if engine is EngineKind.SEQUENTIAL and rotation in (None, []) and gm_prefab is not None:
        if not gm_prefab.has_component("next_acting"):
            issue("gm.prefab", "MissingGmComponent",
                  "sequential engine needs a next_acting component or a rotation")
    if engine is EngineKind.ASYNCHRONOUS and gm_prefab is not None:
        if not gm_prefab.has_component("scheduler"):
            issue("gm.prefab", "MissingGmComponent",
                  "asynchronous engine needs a scheduler component")

    return issues


def instantiate(doc: dict) -> tuple[list[Entity], Entity, RunConfig]:
    """Build every entity and the run configuration; deterministic given doc."""
    report = validate(doc)
    if report:
        raise ScenarioValidationError(report)

    actors = []
    for i, entry in enumerate(doc["actors"]):
        prefab = get_prefab(entry["prefab"])
        name = _entity_name(entry, f"actor{i}")
        actors.append(prefab.instantiate(name, entry.get("overrides", {})))

    gm_entry = doc["gm"]
    gm = get_prefab(gm_entry["prefab"]).instantiate(
        _entity_name(gm_entry, "gm"), gm_entry.get("overrides", {}))

    action_spec = doc.get("action_spec", {})
    config = RunConfig(
        engine=_ENGINE_NAMES[doc["engine"]],
        premise=doc["premise"],
        max_steps=doc["max_steps"],
        seed=doc["seed"],
        call_to_action=action_spec.get("call_to_action", "What does {name} do next?"),
        action_output_type=_OUTPUT_NAMES[action_spec.get("output_type", "free")],
        action_options=tuple(action_spec.get("options", ())),
        rotation=tuple(doc["rotation"]) if doc.get("rotation") else None,
    )
    return actors, gm, config
