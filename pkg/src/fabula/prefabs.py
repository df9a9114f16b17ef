"""Prefabs: named, parameterized component collections.

A prefab is a designer-facing template. Its declared parameters (with
types and defaults) feed the component parameter maps; cloning a prefab
with overrides yields an independent copy. The built-in catalog covers
four actor styles and three GM temperaments.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import DuplicatePrefabName, InvalidSchema, TypeMismatch, UnknownParameter
from .kernel import Entity, build_entity

ROLE_ACTOR = "actor"
ROLE_GM = "gm"

_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "map": lambda v: isinstance(v, dict),
}


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    default: Any

    def check(self, value: Any) -> bool:
        if value is None:
            return self.default is None
        return _TYPE_CHECKS[self.type](value)


@dataclass
class Prefab:
    """A reusable entity template with declared parameters."""

    name: str
    role: str
    description: str
    components: list[tuple[str, dict]]
    params: list[ParamSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.role not in (ROLE_ACTOR, ROLE_GM):
            raise InvalidSchema(f"prefab {self.name!r}: unknown role {self.role!r}")
        if not self.components:
            raise InvalidSchema(f"prefab {self.name!r}: component list is empty")
        for spec in self.params:
            if spec.type not in _TYPE_CHECKS:
                raise InvalidSchema(
                    f"prefab {self.name!r}: parameter {spec.name!r} has unknown type {spec.type!r}")
            if not spec.check(spec.default):
                raise InvalidSchema(
                    f"prefab {self.name!r}: default for {spec.name!r} is not a {spec.type}")

    def param_names(self) -> set[str]:
        return {p.name for p in self.params}

    def check_overrides(self, overrides: dict) -> None:
        by_name = {p.name: p for p in self.params}
        for key, value in overrides.items():
            if key not in by_name:
                raise UnknownParameter(f"prefab {self.name!r} declares no parameter {key!r}")
            if not by_name[key].check(value):
                raise TypeMismatch(
                    f"prefab {self.name!r} parameter {key!r} expects {by_name[key].type}, "
                    f"got {type(value).__name__}")

    def resolved_params(self, overrides: Optional[dict] = None) -> dict:
        overrides = overrides or {}
        self.check_overrides(overrides)
        values = {p.name: copy.deepcopy(p.default) for p in self.params}
        values.update(copy.deepcopy(overrides))
        return values

    def component_specs(self, overrides: Optional[dict] = None) -> list[tuple[str, dict]]:
        """Component parameter maps with `{"$param": name}` references filled."""
        values = self.resolved_params(overrides)

        def fill(template: Any) -> Any:
            if isinstance(template, dict):
                if set(template) == {"$param"}:
                    return copy.deepcopy(values[template["$param"]])
                return {k: fill(v) for k, v in template.items()}
            if isinstance(template, list):
                return [fill(v) for v in template]
            return copy.deepcopy(template)

        return [(type_id, fill(params)) for type_id, params in self.components]

    def instantiate(self, entity_name: str, overrides: Optional[dict] = None) -> Entity:
        return build_entity(entity_name, self.component_specs(overrides))

    def clone(self, name: str, overrides: Optional[dict] = None) -> "Prefab":
        """Deep, independent copy, optionally with new parameter defaults."""
        overrides = overrides or {}
        self.check_overrides(overrides)
        params = [
            ParamSpec(p.name, p.type,
                      copy.deepcopy(overrides.get(p.name, p.default)))
            for p in self.params
        ]
        return Prefab(name, self.role, self.description,
                      copy.deepcopy(self.components), params)

    def has_component(self, type_id: str) -> bool:
        return any(tid == type_id for tid, _ in self.components)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "role": self.role,
            "description": self.description,
            "components": [tid for tid, _ in self.components],
            "params": [
                {"name": p.name, "type": p.type, "default": p.default}
                for p in self.params
            ],
        }


_PREFABS: dict[str, Prefab] = {}


def register_prefab(prefab: Prefab) -> None:
    if prefab.name in _PREFABS:
        raise DuplicatePrefabName(f"prefab {prefab.name!r} is already registered")
    _PREFABS[prefab.name] = prefab


def get_prefab(name: str) -> Optional[Prefab]:
    return _PREFABS.get(name)


def list_prefabs() -> list[Prefab]:
    return list(_PREFABS.values())


def clone_with_overrides(prefab: Prefab, name: str, overrides: Optional[dict] = None) -> Prefab:
    return prefab.clone(name, overrides)


def _builtin_catalog() -> list[Prefab]:
    return [
        Prefab(
            name="basic_actor",
            role=ROLE_ACTOR,
            description="Persona and recent observations feeding a language-model actor.",
            components=[
                ("persona", {"text": {"$param": "persona"}}),
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("lm_acting", {}),
            ],
            params=[
                ParamSpec("persona", "string", "A curious person."),
                ParamSpec("buffer_capacity", "integer", 50),
            ],
        ),
        Prefab(
            name="reflective_actor",
            role=ROLE_ACTOR,
            description="Adds associative memory, self-reflection, and a rolling plan.",
            components=[
                ("persona", {"text": {"$param": "persona"}}),
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("memory", {"half_life": {"$param": "half_life"}}),
                ("self_reflection", {"top_m": {"$param": "top_m"}}),
                ("plan", {"refresh_interval": {"$param": "refresh_interval"}}),
                ("lm_acting", {}),
            ],
            params=[
                ParamSpec("persona", "string", "A thoughtful person."),
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("half_life", "number", 20.0),
                ParamSpec("top_m", "integer", 5),
                ParamSpec("refresh_interval", "integer", 5),
            ],
        ),
        Prefab(
            name="rational_actor",
            role=ROLE_ACTOR,
            description="Picks the utility-maximizing option; never calls the provider.",
            components=[
                ("persona", {"text": {"$param": "persona"}}),
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("rational_acting", {"utilities": {"$param": "utilities"}}),
            ],
            params=[
                ParamSpec("persona", "string", "A coldly rational agent."),
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("utilities", "map", {}),
            ],
        ),
        Prefab(
            name="human_actor",
            role=ROLE_ACTOR,
            description="Routes decisions to a human player over an input channel.",
            components=[
                ("persona", {"text": {"$param": "persona"}}),
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("human_acting", {"timeout": {"$param": "timeout"}}),
            ],
            params=[
                ParamSpec("persona", "string", "The player character."),
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("timeout", "number", 300.0),
            ],
        ),
        Prefab(
            name="dramatist_gm",
            role=ROLE_GM,
            description="Narrative director with per-entity perception and secrets.",
            components=[
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("world_state", {}),
                ("narrative_director", {"beats": {"$param": "beats"},
                                        "guidance": {"$param": "guidance"}}),
                ("next_acting", {}),
                ("terminator", {}),
                ("observation_dispatcher", {"mode": "asymmetric",
                                            "secrets": {"$param": "secrets"}}),
                ("event_resolver", {}),
            ],
            params=[
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("beats", "list", []),
                ParamSpec("guidance", "string", "Maintain dramatic tension."),
                ParamSpec("secrets", "list", []),
            ],
        ),
        Prefab(
            name="evaluationist_gm",
            role=ROLE_GM,
            description="Broadcast world with rubric scoring and strict termination.",
            components=[
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("world_state", {}),
                ("next_acting", {}),
                ("terminator", {}),
                ("rubric_scorer", {"rubric": {"$param": "rubric"},
                                   "mode": {"$param": "scorer_mode"},
                                   "utilities": {"$param": "utilities"}}),
                ("observation_dispatcher", {"mode": "broadcast"}),
                ("event_resolver", {}),
            ],
            params=[
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("rubric", "string", "Reward actions that advance the shared goal."),
                ParamSpec("scorer_mode", "string", "provider"),
                ParamSpec("utilities", "map", {}),
            ],
        ),
        Prefab(
            name="simulationist_gm",
            role=ROLE_GM,
            description="World-state bookkeeping with asynchronous wake scheduling.",
            components=[
                ("observation_buffer", {"capacity": {"$param": "buffer_capacity"}}),
                ("world_state", {}),
                ("next_acting", {}),
                ("scheduler", {"mode": {"$param": "scheduler_mode"},
                               "jitter": {"$param": "jitter"}}),
                ("terminator", {}),
                ("observation_dispatcher", {"mode": "broadcast"}),
                ("event_resolver", {}),
            ],
            params=[
                ParamSpec("buffer_capacity", "integer", 50),
                ParamSpec("scheduler_mode", "string", "rule"),
                ParamSpec("jitter", "integer", 5),
            ],
        ),
    ]


for _prefab in _builtin_catalog():
    register_prefab(_prefab)

BUILTIN_PREFAB_NAMES = tuple(_PREFABS)
