"""Actor-side components: identity, memory, planning, and acting styles."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import ChannelClosed, DependencyMissing, ProviderError
from ..kernel import (
    Action,
    CallContext,
    Component,
    ComponentKind,
    ContextEntry,
    Entity,
    OutputType,
    substitute_name,
)
from ..lm import match_choice, parse_float

_TOKEN_RE = re.compile(r"[a-z0-9]+")

REFLECTION_QUESTION = "What kind of person am I?"


def tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


class Persona(Component):
    """Constant identity text contributed to every decision."""

    type_id = "persona"

    def __init__(self, text: str, name: Optional[str] = None):
        super().__init__(name)
        if not text:
            raise ValueError("persona text must be non-empty")
        self.text = text

    def preact(self, ctx: CallContext) -> ContextEntry:
        return self.entry("Identity", self.text)


class ObservationBuffer(Component):
    """Keeps the last K observation texts, oldest first."""

    type_id = "observation_buffer"

    def __init__(self, capacity: int = 50, name: Optional[str] = None):
        super().__init__(name)
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.observations: list[str] = []

    def preobserve(self, ctx: CallContext) -> None:
        self.observations.append(ctx.observation.text)
        if len(self.observations) > self.capacity:
            del self.observations[: len(self.observations) - self.capacity]

    def preact(self, ctx: CallContext) -> ContextEntry:
        text = "\n".join(self.observations) if self.observations else "(none)"
        return self.entry("Recent observations", text)

    def state_dict(self) -> dict:
        return {"observations": list(self.observations)}

    def load_state(self, state: dict) -> None:
        self.observations = list(state.get("observations", []))[-self.capacity:]


@dataclass(frozen=True)
class MemoryRecord:
    text: str
    sim_time: int
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("memory text must be non-empty")


@dataclass(frozen=True)
class RetrievalWeights:
    w_recency: float = 1.0
    w_relevance: float = 1.0
    half_life: float = 20.0

    def __post_init__(self):
        if self.w_recency < 0 or self.w_relevance < 0:
            raise ValueError("weights must be nonnegative")
        if self.w_recency == 0 and self.w_relevance == 0:
            raise ValueError("at least one weight must be positive")
        if self.half_life <= 0:
            raise ValueError("half_life must be positive")


def score_record(record: MemoryRecord, query_tokens: set[str], now: int,
                 weights: RetrievalWeights) -> float:
    """Lexical relevance (Jaccard) plus half-life recency decay."""
    relevance = 0.0
    if weights.w_relevance:
        record_tokens = tokens(record.text)
        union = query_tokens | record_tokens
        if union:
            relevance = len(query_tokens & record_tokens) / len(union)
    recency = 2.0 ** (-(now - record.sim_time) / weights.half_life)
    return weights.w_relevance * relevance + weights.w_recency * recency


class AssociativeMemory(Component):
    """Append-only store of observations with scored retrieval.

    Contributes nothing to the context bundle directly; other components
    (self-reflection, custom ones) call retrieve().
    """

    type_id = "memory"

    def __init__(self, w_recency: float = 1.0, w_relevance: float = 1.0,
                 half_life: float = 20.0, name: Optional[str] = None):
        super().__init__(name)
        self.weights = RetrievalWeights(w_recency, w_relevance, half_life)
        self.records: list[MemoryRecord] = []
        self._now = 0

    def add(self, text: str, sim_time: int, tags: Sequence[str] = ()) -> MemoryRecord:
        record = MemoryRecord(text, sim_time, tuple(tags))
        self.records.append(record)
        self._now = max(self._now, sim_time)
        return record

    def preobserve(self, ctx: CallContext) -> None:
        self.add(ctx.observation.text, ctx.observation.sim_time, ("observation",))

    def retrieve(self, query: str, k: int, now: Optional[int] = None) -> list[MemoryRecord]:
        """Top-k records by score; ties prefer newer, then earlier-stored."""
        if k < 1:
            raise ValueError("k must be at least 1")
        current = self._now if now is None else now
        query_tokens = tokens(query)
        ranked = sorted(
            enumerate(self.records),
            key=lambda pair: (
                -score_record(pair[1], query_tokens, current, self.weights),
                -pair[1].sim_time,
                pair[0],
            ),
        )
        return [record for _, record in ranked[:k]]

    def state_dict(self) -> dict:
        return {
            "records": [
                {"text": r.text, "sim_time": r.sim_time, "tags": list(r.tags)}
                for r in self.records
            ],
            "now": self._now,
        }

    def load_state(self, state: dict) -> None:
        self.records = [
            MemoryRecord(r["text"], r["sim_time"], tuple(r.get("tags", ())))
            for r in state.get("records", [])
        ]
        self._now = state.get("now", max((r.sim_time for r in self.records), default=0))


class SelfReflection(Component):
    """Asks who the entity is, given its most salient memories.

    Deliberately not declared_independent: later components may read the
    answer from the bundle built so far.
    """

    type_id = "self_reflection"

    def __init__(self, top_m: int = 5, name: Optional[str] = None):
        super().__init__(name)
        if top_m < 1:
            raise ValueError("top_m must be at least 1")
        self.top_m = top_m
        self._memory: Optional[AssociativeMemory] = None

    def on_attached(self, entity: Entity) -> None:
        memory = entity.find("memory")
        if memory is None:
            raise DependencyMissing(
                f"{self.name} on entity {entity.name!r} requires a memory component")
        self._memory = memory

    def preact(self, ctx: CallContext) -> ContextEntry:
        memories = self._memory.retrieve(REFLECTION_QUESTION, self.top_m) if self._memory.records else []
        lines = "\n".join(r.text for r in memories) if memories else "(no memories yet)"
        prompt = f"Memories of {ctx.entity}:\n{lines}\n{REFLECTION_QUESTION}"
        answer = ctx.sample_text(prompt)
        self._memory.add(answer, ctx.sim_time, ("reflection",))
        return self.entry("Self reflection", answer)


class Plan(Component):
    """Caches a plan, refreshing every R steps or on a trigger phrase."""

    type_id = "plan"

    def __init__(self, refresh_interval: int = 5, trigger: Optional[str] = None,
                 name: Optional[str] = None):
        super().__init__(name)
        if refresh_interval < 1:
            raise ValueError("refresh_interval must be at least 1")
        self.refresh_interval = refresh_interval
        self.trigger = trigger
        self.plan = "(no plan yet)"
        # starts at the interval so the first step regenerates
        self.steps_since_refresh = refresh_interval
        self.last_observation = ""

    def preobserve(self, ctx: CallContext) -> None:
        self.last_observation = ctx.observation.text

    def preact(self, ctx: CallContext) -> ContextEntry:
        return self.entry("Current plan", self.plan)

    def postact(self, ctx: CallContext) -> None:
        triggered = bool(self.trigger) and self.trigger in self.last_observation
        if self.steps_since_refresh >= self.refresh_interval or triggered:
            try:
                context = "".join(f"## {e.label}\n{e.text}\n" for e in ctx.context_so_far)
                prompt = f"{context}What is {ctx.entity}'s plan going forward?"
                self.plan = ctx.sample_text(prompt)
            except ProviderError as exc:
                ctx.warn("plan_refresh_failed", f"kept stale plan: {exc}")
            self.steps_since_refresh = 1
        else:
            self.steps_since_refresh += 1

    def state_dict(self) -> dict:
        return {
            "plan": self.plan,
            "steps_since_refresh": self.steps_since_refresh,
            "last_observation": self.last_observation,
        }

    def load_state(self, state: dict) -> None:
        self.plan = state.get("plan", "(no plan yet)")
        self.steps_since_refresh = state.get("steps_since_refresh", self.refresh_interval)
        self.last_observation = state.get("last_observation", "")


def render_prompt(ctx: CallContext) -> str:
    """Bundle sections in registration order, then the call to action."""
    sections = "".join(f"## {e.label}\n{e.text}\n" for e in ctx.bundle.entries)
    return sections + ctx.spec.rendered(ctx.entity)


class LmActing(Component):
    """Turns the aggregated context into an action via the provider."""

    type_id = "lm_acting"
    kind = ComponentKind.ACTING

    def decide(self, ctx: CallContext) -> Action:
        prompt = render_prompt(ctx)
        spec = ctx.spec
        if spec.output_type is OutputType.CHOICE:
            result = ctx.sample_choice(prompt, spec.options)
            return Action.of_choice(result.raw, ctx.entity, result.option, result.index,
                                    tag=spec.tag, fallback=result.fallback)
        if spec.output_type is OutputType.FLOAT:
            result = ctx.sample_float(prompt)
            return Action.of_number(result.raw, ctx.entity, result.value,
                                    tag=spec.tag, fallback=result.fallback)
        text = ctx.sample_text(prompt)
        return Action.free(text, ctx.entity, tag=spec.tag)


@dataclass
class PendingActionRequest:
    """What a human player sees when the engine waits on them."""

    entity: str
    call_to_action: str
    output_type: str
    options: tuple[str, ...]
    context: str
    step: int


class Submission:
    """One submitted answer; respond() reports the validation verdict."""

    def __init__(self, text: str):
        self.text = text

    def respond(self, accepted: bool, detail: str = "") -> None:
        pass


class ActionChannel:
    """Transport between a blocked human_acting component and a frontend."""

    def request_action(self, request: PendingActionRequest,
                       timeout: Optional[float]) -> Optional[Submission]:
        """Block for the next submission; None means timeout."""
        raise NotImplementedError


class HumanActing(Component):
    """Routes the decision to a human through the attached channel.

    Invalid submissions are rejected and the request stays pending; on
    timeout or a closed channel the entity simply waits.
    """

    type_id = "human_acting"
    kind = ComponentKind.ACTING

    def __init__(self, timeout: Optional[float] = None, name: Optional[str] = None):
        super().__init__(name)
        self.timeout = timeout

    def _waits(self, ctx: CallContext) -> Action:
        return Action.free(substitute_name("{name} waits.", ctx.entity), ctx.entity,
                           tag=ctx.spec.tag, fallback=True)

    def decide(self, ctx: CallContext) -> Action:
        channel: Optional[ActionChannel] = ctx.channel
        if channel is None:
            ctx.warn("no_channel", f"no input channel for {ctx.entity}; waiting")
            return self._waits(ctx)
        spec = ctx.spec
        request = PendingActionRequest(
            entity=ctx.entity,
            call_to_action=spec.rendered(ctx.entity),
            output_type=spec.output_type.value,
            options=spec.options,
            context=ctx.bundle.render(),
            step=ctx.step,
        )
        deadline = None
        if self.timeout is not None:
            deadline = time.monotonic() + self.timeout
        while True:
            remaining = None
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    ctx.warn("human_timeout", f"{ctx.entity} did not act in time")
                    return self._waits(ctx)
            try:
                submission = channel.request_action(request, remaining)
            except ChannelClosed:
                ctx.warn("channel_closed", f"input channel closed for {ctx.entity}")
                return self._waits(ctx)
            if submission is None:
                ctx.warn("human_timeout", f"{ctx.entity} did not act in time")
                return self._waits(ctx)
            action = self._validate(ctx, spec, submission.text)
            if action is not None:
                submission.respond(True)
                return action
            submission.respond(False, self._rejection(spec))

    def _rejection(self, spec) -> str:
        if spec.output_type is OutputType.CHOICE:
            return "answer must be one of: " + ", ".join(spec.options)
        if spec.output_type is OutputType.FLOAT:
            return "answer must contain a number"
        return "answer must be non-empty"

    def _validate(self, ctx: CallContext, spec, text: str) -> Optional[Action]:
        if spec.output_type is OutputType.CHOICE:
            idx = match_choice(text, spec.options)
            if idx is None:
                return None
            return Action.of_choice(text, ctx.entity, spec.options[idx], idx, tag=spec.tag)
        if spec.output_type is OutputType.FLOAT:
            value = parse_float(text)
            if value is None:
                return None
            return Action.of_number(text, ctx.entity, value, tag=spec.tag)
        if not text.strip():
            return None
        return Action.free(text, ctx.entity, tag=spec.tag)


class RationalActing(Component):
    """Picks the utility-maximizing option; never consults the provider."""

    type_id = "rational_acting"
    kind = ComponentKind.ACTING

    def __init__(self, utilities: dict, name: Optional[str] = None):
        super().__init__(name)
        self.utilities = {str(k): float(v) for k, v in utilities.items()}

    def decide(self, ctx: CallContext) -> Action:
        spec = ctx.spec
        if spec.output_type is not OutputType.CHOICE:
            raise ValueError(f"rational acting requires a CHOICE spec, got {spec.output_type.name}")
        best_index = 0
        best_utility = None
        for i, option in enumerate(spec.options):
            utility = self.utilities.get(option, 0.0)
            if best_utility is None or utility > best_utility:
                best_index, best_utility = i, utility
        option = spec.options[best_index]
        return Action.of_choice(option, ctx.entity, option, best_index, tag=spec.tag)
