"""Entities, components, and the observe/act lifecycle.

An entity is a named box of components. Context components contribute
labeled text toward decisions and react to outcomes; exactly one acting
component per entity turns the aggregated context plus an action request
into the entity's single action for the step. Observations flow through
preobserve/postobserve, actions through preact/decide/postact, always in
component registration order.
"""

from __future__ import annotations

import numbers
from concurrent.futures import Executor, Future
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from . import lm
from .canonical import canonical_bytes, sha256_hex, split_seed
from .errors import (
    ActingFailure,
    ComponentFailure,
    DuplicateComponentName,
    MultipleActingComponents,
    NoActingComponent,
    SerializationFailure,
    UnknownComponentType,
)

EntityId = str

# Spec tags the engine uses when asking the GM different kinds of questions.
TAG_ACTION = "action"
TAG_RESOLVE = "resolve"
TAG_NEXT_ACTING = "next_acting"
TAG_TERMINATE = "terminate"
TAG_SCORE = "score"
TAG_NEXT_WAKE = "next_wake"


def substitute_name(template: str, name: str) -> str:
    """Replace the `{name}` placeholder; unknown placeholders stay verbatim."""
    return template.replace("{name}", name)


class ComponentKind(Enum):
    CONTEXT = "context"
    ACTING = "acting"


class OutputType(Enum):
    FREE = "free"
    CHOICE = "choice"
    FLOAT = "float"


@dataclass(frozen=True)
class ActionSpec:
    """A typed request to act, issued by the engine on the GM's behalf.

    `call_to_action` may contain the `{name}` placeholder for the acting
    entity's name. `options` is required (unique, non-empty) for CHOICE and
    must be absent otherwise.
    """

    call_to_action: str
    output_type: OutputType = OutputType.FREE
    options: tuple[str, ...] = ()
    tag: Optional[str] = None

    def __post_init__(self):
        if self.output_type is OutputType.CHOICE:
            if not self.options:
                raise ValueError("CHOICE spec requires options")
            if any(not opt for opt in self.options):
                raise ValueError("CHOICE options must be non-empty strings")
            if len(set(self.options)) != len(self.options):
                raise ValueError("CHOICE options must be unique")
        elif self.options:
            raise ValueError(f"{self.output_type.name} spec must not carry options")

    def rendered(self, name: str) -> str:
        return substitute_name(self.call_to_action, name)


@dataclass
class Action:
    """The resolved answer to an ActionSpec."""

    raw_text: str
    actor: EntityId
    output_type: OutputType
    text: Optional[str] = None
    choice: Optional[str] = None
    choice_index: Optional[int] = None
    number: Optional[float] = None
    spec_tag: Optional[str] = None
    fallback: bool = False

    @staticmethod
    def free(raw_text: str, actor: EntityId, tag: Optional[str] = None, fallback: bool = False) -> "Action":
        return Action(raw_text, actor, OutputType.FREE, text=raw_text, spec_tag=tag, fallback=fallback)

    @staticmethod
    def of_choice(raw_text: str, actor: EntityId, option: str, index: int,
                  tag: Optional[str] = None, fallback: bool = False) -> "Action":
        return Action(raw_text, actor, OutputType.CHOICE, choice=option,
                      choice_index=index, spec_tag=tag, fallback=fallback)

    @staticmethod
    def of_number(raw_text: str, actor: EntityId, value: float,
                  tag: Optional[str] = None, fallback: bool = False) -> "Action":
        return Action(raw_text, actor, OutputType.FLOAT, number=float(value),
                      spec_tag=tag, fallback=fallback)

    @property
    def value(self) -> Any:
        if self.output_type is OutputType.FREE:
            return self.text
        if self.output_type is OutputType.CHOICE:
            return self.choice
        return self.number

    def to_payload(self) -> dict:
        payload: dict[str, Any] = {
            "raw_text": self.raw_text,
            "output_type": self.output_type.value,
            "value": self.value,
            "fallback": self.fallback,
        }
        if self.spec_tag is not None:
            payload["tag"] = self.spec_tag
        if self.choice_index is not None:
            payload["choice_index"] = self.choice_index
        return payload


def validate_action(action: Action, spec: ActionSpec) -> None:
    """Enforce action/spec conformance; degraded FREE fallbacks are exempt."""
    if action.fallback and action.output_type is OutputType.FREE:
        return
    if action.output_type is not spec.output_type:
        raise ActingFailure(action.actor, f"action type {action.output_type.name} "
                                          f"does not match spec {spec.output_type.name}")
    if spec.output_type is OutputType.CHOICE:
        if action.choice not in spec.options:
            raise ActingFailure(action.actor, f"choice {action.choice!r} not in options")
        if spec.options[action.choice_index or 0] != action.choice:
            raise ActingFailure(action.actor, "choice index does not match option")
    elif spec.output_type is OutputType.FLOAT:
        if not isinstance(action.number, numbers.Real) or action.number != action.number:
            raise ActingFailure(action.actor, "FLOAT action lacks a finite number")


@dataclass(frozen=True)
class Observation:
    """A world happening as seen by one entity."""

    text: str
    sim_time: int
    seq: int
    source: EntityId

    def __post_init__(self):
        if not self.text:
            raise ValueError("observation text must be non-empty")
        if self.sim_time < 0:
            raise ValueError("sim_time must be nonnegative")


@dataclass(frozen=True)
class ContextEntry:
    component: str
    label: str
    text: str


@dataclass
class ContextBundle:
    """Aggregated context contributions in component registration order."""

    entries: list[ContextEntry] = field(default_factory=list)

    def render(self) -> str:
        return "".join(f"## {e.label}\n{e.text}\n" for e in self.entries)

    def find(self, label: str) -> Optional[str]:
        for e in self.entries:
            if e.label == label:
                return e.text
        return None


class Recorder:
    """Ordered buffer of pending trace records for one lifecycle call.

    The engine flushes buffers in a deterministic order so that traces do
    not depend on thread scheduling.
    """

    def __init__(self):
        self.records: list[dict] = []

    def record(self, kind: str, payload: dict, entity: Optional[str] = None) -> None:
        self.records.append({"kind": kind, "payload": payload, "entity": entity})


class SeedAllocator:
    """Hands out per-call seeds split from the root seed.

    One allocator exists per (entity, step); each provider call consumes the
    next ordinal. Not thread-safe by design: a single entity's lifecycle
    calls are never concurrent.
    """

    def __init__(self, root: int, entity: str, step: int, start: int = 0):
        self.root = root
        self.entity = entity
        self.step = step
        self.ordinal = start

    def next(self) -> int:
        seed = split_seed(self.root, self.entity, self.step, self.ordinal)
        self.ordinal += 1
        return seed


class CallContext:
    """Everything a component may touch during one observe/act call."""

    def __init__(
        self,
        entity: str,
        *,
        provider: Optional[lm.Provider] = None,
        recorder: Optional[Recorder] = None,
        seeds: Optional[SeedAllocator] = None,
        step: int = 0,
        sim_time: int = 0,
        roster: Sequence[str] = (),
        recipients: Sequence[str] = (),
        channel: Any = None,
        executor: Optional[Executor] = None,
        retries: int = 3,
        meta: Optional[dict] = None,
    ):
        self.entity = entity
        self.provider = provider
        self.recorder = recorder or Recorder()
        self.seeds = seeds or SeedAllocator(0, entity, step)
        self.step = step
        self.sim_time = sim_time
        self.roster = tuple(roster)
        self.recipients = tuple(recipients)
        self.channel = channel
        self.executor = executor
        self.retries = retries
        self.meta = dict(meta or {})
        # call-scoped state, filled in by Entity.observe / Entity.act
        self.spec: Optional[ActionSpec] = None
        self.observation: Optional[Observation] = None
        self.action: Optional[Action] = None
        self.context_so_far: list[ContextEntry] = []
        self.proposed: Optional[Action] = None
        self.outbox: list[tuple[str, str]] = []

    # -- component-facing helpers -----------------------------------

    def warn(self, code: str, detail: str) -> None:
        self.recorder.record("warning", {"code": code, "detail": detail}, entity=self.entity)

    def propose_action(self, action: Action) -> None:
        self.proposed = action

    def dispatch(self, entity: str, text: str) -> None:
        """Queue an observation for the engine to deliver after this call."""
        self.outbox.append((entity, text))

    def _require_provider(self) -> lm.Provider:
        if self.provider is None:
            raise RuntimeError("no language-model provider configured for this call")
        return self.provider

    def _record_call(self, req: lm.PromptRequest, completion: lm.Completion) -> None:
        self.recorder.record(
            "lm_call",
            {
                "provider": completion.provider,
                "seed": req.seed,
                "prompt_digest": sha256_hex(req.text),
                "prompt": req.text,
                "response": completion.text,
            },
            entity=self.entity,
        )

    def sample_text(self, prompt: str, **overrides: Any) -> str:
        provider = self._require_provider()
        req = provider.make_request(prompt, seed=self.seeds.next(), **overrides)
        completion = provider.complete(req)
        self._record_call(req, completion)
        return completion.text

    def sample_choice(self, prompt: str, options: Sequence[str],
                      retries: Optional[int] = None) -> lm.ChoiceResult:
        provider = self._require_provider()
        result = lm.sample_choice(
            provider, prompt, options,
            retries=self.retries if retries is None else retries,
            seeds=self.seeds.next, on_call=self._record_call,
        )
        if result.fallback:
            self.warn("choice_fallback", f"invalid choice after retries; defaulted to {result.option!r}")
        return result

    def sample_float(self, prompt: str, retries: Optional[int] = None) -> lm.FloatResult:
        provider = self._require_provider()
        result = lm.sample_float(
            provider, prompt,
            retries=self.retries if retries is None else retries,
            seeds=self.seeds.next, on_call=self._record_call,
        )
        if result.fallback:
            self.warn("float_fallback", "no parseable number after retries; defaulted to 0.0")
        return result


class Component:
    """Base class for all components.

    Subclasses set `type_id` (the registry name), `kind`, and override the
    subset of hooks they care about. Context components may return a
    ContextEntry from preact; acting components implement decide().
    """

    type_id: str = "component"
    kind: ComponentKind = ComponentKind.CONTEXT
    declared_independent: bool = False

    def __init__(self, name: Optional[str] = None):
        self.name = name or self.type_id
        self.entity: Optional["Entity"] = None

    def on_attached(self, entity: "Entity") -> None:
        """Build-time hook for sibling-dependency checks."""

    def preobserve(self, ctx: CallContext) -> None:
        pass

    def postobserve(self, ctx: CallContext) -> None:
        pass

    def preact(self, ctx: CallContext) -> Optional[ContextEntry]:
        return None

    def decide(self, ctx: CallContext) -> Action:
        raise NotImplementedError(f"{self.name} is not an acting component")

    def postact(self, ctx: CallContext) -> None:
        pass

    def state_dict(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass

    def entry(self, label: str, text: str) -> ContextEntry:
        return ContextEntry(self.name, label, text)


# -- component type registry ----------------------------------------------

_REGISTRY: dict[str, Callable[..., Component]] = {}


def register_component(type_id: str, factory: Callable[..., Component]) -> None:
    _REGISTRY[type_id] = factory


def component_factory(type_id: str) -> Callable[..., Component]:
    try:
        return _REGISTRY[type_id]
    except KeyError:
        raise UnknownComponentType(f"unknown component type {type_id!r}") from None


def known_component_types() -> list[str]:
    return sorted(_REGISTRY)


class Entity:
    """A named container of components with exactly one acting component."""

    def __init__(self, name: str, components: list[Component], acting_index: int):
        self.name = name
        self.components = components
        self.acting_index = acting_index
        for comp in components:
            comp.entity = self

    @property
    def acting(self) -> Component:
        return self.components[self.acting_index]

    @property
    def context_components(self) -> list[Component]:
        return [c for c in self.components if c.kind is ComponentKind.CONTEXT]

    def find(self, type_id: str) -> Optional[Component]:
        for comp in self.components:
            if comp.type_id == type_id:
                return comp
        return None

    def has(self, type_id: str) -> bool:
        return self.find(type_id) is not None

    # -- lifecycle ----------------------------------------------------

    def observe(self, obs: Observation, ctx: Optional[CallContext] = None) -> None:
        """Run preobserve then postobserve on every component, in order."""
        ctx = ctx or CallContext(self.name)
        ctx.observation = obs
        for comp in self.components:
            _run_hook(comp, comp.preobserve, ctx)
        for comp in self.components:
            _run_hook(comp, comp.postobserve, ctx)

    def act(self, spec: ActionSpec, ctx: Optional[CallContext] = None) -> Action:
        """Aggregate context, let the acting component decide, then react.

        Phase 1 runs preact on context components. Components flagged
        declared_independent may execute concurrently when an executor is
        available; everything else runs in registration order and may read
        the bundle built so far. Aggregation order is always registration
        order. Phase 2 is the acting component's decision; phase 3 runs
        postact on every component.
        """
        ctx = ctx or CallContext(self.name)
        ctx.spec = spec

        entries: list[ContextEntry] = []
        ctx.context_so_far = entries
        contexts = [(i, c) for i, c in enumerate(self.components) if c.kind is ComponentKind.CONTEXT]

        futures: dict[int, Future] = {}
        if ctx.executor is not None:
            for i, comp in contexts:
                if comp.declared_independent:
                    futures[i] = ctx.executor.submit(_run_hook, comp, comp.preact, ctx)

        for i, comp in contexts:
            if i in futures:
                entry = futures[i].result()
            else:
                entry = _run_hook(comp, comp.preact, ctx)
            if entry is not None:
                entries.append(entry)

        bundle = ContextBundle(list(entries))
        ctx.bundle = bundle

        try:
            action = self.acting.decide(ctx)
        except (ActingFailure, ComponentFailure):
            raise
        except Exception as exc:
            raise ActingFailure(self.acting.name, str(exc)) from exc
        validate_action(action, spec)

        ctx.action = action
        for comp in self.components:
            _run_hook(comp, comp.postact, ctx)
        return action

    # -- persistence ----------------------------------------------------

    def snapshot(self) -> dict[str, dict]:
        """Stable-keyed component states; canonically serializable."""
        snap = {comp.name: comp.state_dict() for comp in self.components}
        try:
            canonical_bytes(snap)
        except (TypeError, ValueError) as exc:
            raise SerializationFailure(f"entity {self.name!r} state is not serializable: {exc}") from exc
        return snap

    def snapshot_bytes(self) -> bytes:
        return canonical_bytes(self.snapshot())

    def restore(self, snap: dict[str, dict]) -> None:
        for comp in self.components:
            if comp.name in snap:
                comp.load_state(snap[comp.name])


def _run_hook(comp: Component, hook: Callable, ctx: CallContext):
    try:
        return hook(ctx)
    except (ComponentFailure, ActingFailure):
        raise
    except Exception as exc:
        raise ComponentFailure(comp.name, str(exc)) from exc


ComponentSpecLike = Any  # Component | (type_id, params) | {"type": ..., "params": ...}


def build_entity(name: str, specs: Sequence[ComponentSpecLike]) -> Entity:
    """Assemble an entity, enforcing the single-acting-component rule.

    Each spec is either an instantiated Component, a (type_id, params)
    pair, or a {"type": ..., "params": ...} mapping resolved through the
    component registry.
    """
    if not name:
        raise ValueError("entity name must be non-empty")

    components: list[Component] = []
    for spec in specs:
        if isinstance(spec, Component):
            components.append(spec)
        elif isinstance(spec, tuple):
            type_id, params = spec
            components.append(component_factory(type_id)(**dict(params)))
        elif isinstance(spec, dict):
            components.append(component_factory(spec["type"])(**dict(spec.get("params", {}))))
        else:
            raise TypeError(f"unsupported component spec: {spec!r}")

    seen: set[str] = set()
    for comp in components:
        if comp.name in seen:
            raise DuplicateComponentName(f"duplicate component name {comp.name!r} in entity {name!r}")
        seen.add(comp.name)

    acting = [i for i, c in enumerate(components) if c.kind is ComponentKind.ACTING]
    if not acting:
        raise NoActingComponent(f"entity {name!r} has no acting component")
    if len(acting) > 1:
        names = ", ".join(components[i].name for i in acting)
        raise MultipleActingComponents(f"entity {name!r} has multiple acting components: {names}")

    entity = Entity(name, components, acting[0])
    for comp in components:
        comp.on_attached(entity)
    return entity
