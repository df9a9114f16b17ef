"""GM-side components: the pieces that make an entity act as the world.

The GM is an ordinary entity. Its acting component resolves attempted
actions into events; the other behaviors (turn selection, termination,
scheduling, scoring) are context components that answer engine-issued
tagged action requests by proposing the GM's action during preact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from ..canonical import fnv1a64
from ..errors import ProviderError
from ..kernel import (
    TAG_NEXT_ACTING,
    TAG_NEXT_WAKE,
    TAG_RESOLVE,
    TAG_SCORE,
    TAG_TERMINATE,
    Action,
    CallContext,
    Component,
    ComponentKind,
    ContextEntry,
    OutputType,
)

TERMINATION_QUESTION = "Has the episode reached a natural conclusion?"
# index 0 is the safe "continue" fallback
TERMINATION_OPTIONS = ("no", "yes")

_FACT_LINE_RE = re.compile(r"^\s*([A-Za-z0-9_][A-Za-z0-9_ .\-]*?)\s*:\s*(.+?)\s*$")


def _context_text(ctx: CallContext) -> str:
    return "".join(f"## {e.label}\n{e.text}\n" for e in ctx.context_so_far)


class EventResolver(Component):
    """The GM's acting component: decides what actually happens.

    For engine-tagged requests answered by a sibling component the
    proposal is returned as-is. For "resolve" requests the provider turns
    the attempted action into an event statement; on provider failure the
    attempt simply succeeds verbatim.
    """

    type_id = "event_resolver"
    kind = ComponentKind.ACTING

    def __init__(self, name: Optional[str] = None):
        super().__init__(name)
        self.events: list[str] = []

    def decide(self, ctx: CallContext) -> Action:
        if ctx.proposed is not None:
            return ctx.proposed
        spec = ctx.spec
        if spec.tag == TAG_RESOLVE:
            attempt = ctx.meta.get("attempt", "")
            prompt = _context_text(ctx) + spec.rendered(ctx.entity)
            try:
                event_text = ctx.sample_text(prompt)
            except ProviderError as exc:
                ctx.warn("resolution_fallback", f"attempt succeeds verbatim: {exc}")
                event_text = attempt
            self.events.append(event_text)
            return Action.free(event_text, ctx.entity, tag=spec.tag)
        # untagged or unhandled: behave like a plain language-model actor
        prompt = _context_text(ctx) + spec.rendered(ctx.entity)
        if spec.output_type is OutputType.CHOICE:
            result = ctx.sample_choice(prompt, spec.options)
            return Action.of_choice(result.raw, ctx.entity, result.option, result.index,
                                    tag=spec.tag, fallback=result.fallback)
        if spec.output_type is OutputType.FLOAT:
            result = ctx.sample_float(prompt)
            return Action.of_number(result.raw, ctx.entity, result.value,
                                    tag=spec.tag, fallback=result.fallback)
        return Action.free(ctx.sample_text(prompt), ctx.entity, tag=spec.tag)

    def state_dict(self) -> dict:
        return {"events": list(self.events)}

    def load_state(self, state: dict) -> None:
        self.events = list(state.get("events", []))


@dataclass(frozen=True)
class WorldFact:
    key: str
    value: str
    set_at: int
    set_by: str


class WorldState(Component):
    """Append-only world facts with latest-write-wins reads.

    Facts arrive as `key: value` lines, either extracted directly from
    resolved event text (default) or from a dedicated provider prompt
    when use_provider_deltas is on.
    """

    type_id = "world_state"

    def __init__(self, use_provider_deltas: bool = False, name: Optional[str] = None):
        super().__init__(name)
        self.use_provider_deltas = use_provider_deltas
        self.history: list[WorldFact] = []

    def latest(self) -> dict[str, str]:
        facts: dict[str, str] = {}
        for fact in self.history:
            facts[fact.key] = fact.value
        return facts

    def value_of(self, key: str) -> Optional[str]:
        return self.latest().get(key)

    def history_of(self, key: str) -> list[WorldFact]:
        return [f for f in self.history if f.key == key]

    def apply(self, text: str, sim_time: int, set_by: str,
              on_malformed: Optional[Callable[[str], None]] = None) -> list[WorldFact]:
        """Extract `key: value` lines and append them as facts."""
        applied = []
        for line in text.splitlines():
            if not line.strip():
                continue
            m = _FACT_LINE_RE.match(line)
            if m:
                fact = WorldFact(m.group(1), m.group(2), sim_time, set_by)
                self.history.append(fact)
                applied.append(fact)
            elif ":" in line and on_malformed is not None:
                on_malformed(line.strip())
        return applied

    def preact(self, ctx: CallContext) -> ContextEntry:
        facts = self.latest()
        if facts:
            text = "\n".join(f"{k}: {facts[k]}" for k in sorted(facts))
        else:
            text = "(none)"
        return self.entry("World state", text)

    def postact(self, ctx: CallContext) -> None:
        action = ctx.action
        if action is None or action.spec_tag != TAG_RESOLVE:
            return
        if self.use_provider_deltas:
            prompt = (f"Event: {action.raw_text}\n"
                      "List any changed world facts, one per line, as `key: value`. "
                      "Write (none) if nothing changed.")
            try:
                delta_text = ctx.sample_text(prompt)
            except ProviderError as exc:
                ctx.warn("world_delta_failed", str(exc))
                return
            self.apply(delta_text, ctx.sim_time, ctx.entity,
                       on_malformed=lambda line: ctx.warn("malformed_delta", line))
        else:
            # prose lines are normal in event text; only well-formed
            # `key: value` lines become facts
            self.apply(action.raw_text, ctx.sim_time, ctx.entity)

    def state_dict(self) -> dict:
        return {
            "history": [
                {"key": f.key, "value": f.value, "set_at": f.set_at, "set_by": f.set_by}
                for f in self.history
            ],
            "use_provider_deltas": self.use_provider_deltas,
        }

    def load_state(self, state: dict) -> None:
        self.history = [
            WorldFact(f["key"], f["value"], f["set_at"], f["set_by"])
            for f in state.get("history", [])
        ]


class NextActing(Component):
    """Answers "whose turn is it?" requests with a roster choice."""

    type_id = "next_acting"

    def preact(self, ctx: CallContext) -> None:
        spec = ctx.spec
        if spec is None or spec.tag != TAG_NEXT_ACTING:
            return None
        options = spec.options
        if len(options) == 1:
            ctx.propose_action(Action.of_choice(options[0], ctx.entity, options[0], 0,
                                                tag=spec.tag))
            return None
        prompt = _context_text(ctx) + spec.rendered(ctx.entity)
        result = ctx.sample_choice(prompt, options)
        ctx.propose_action(Action.of_choice(result.raw, ctx.entity, result.option,
                                            result.index, tag=spec.tag,
                                            fallback=result.fallback))
        return None


@dataclass(frozen=True)
class SecretKnowledge:
    holder: str
    fact: str
    step: int


class DispatchMode:
    BROADCAST = "broadcast"
    ASYMMETRIC = "asymmetric"


class ObservationDispatcher(Component):
    """Fans each resolved event out as observations, one per entity.

    BROADCAST sends the event text as-is; ASYMMETRIC asks the provider
    what each player perceives. Secrets configured for a (holder, step)
    are appended only to that holder's observation.
    """

    type_id = "observation_dispatcher"

    def __init__(self, mode: str = DispatchMode.BROADCAST,
                 secrets: Optional[list] = None, name: Optional[str] = None):
        super().__init__(name)
        if mode not in (DispatchMode.BROADCAST, DispatchMode.ASYMMETRIC):
            raise ValueError(f"unknown dispatch mode {mode!r}")
        self.mode = mode
        self.secrets = [
            s if isinstance(s, SecretKnowledge)
            else SecretKnowledge(s["holder"], s["fact"], int(s["step"]))
            for s in (secrets or [])
        ]

    def _perceived(self, ctx: CallContext, recipient: str, event_text: str) -> str:
        if self.mode == DispatchMode.BROADCAST or recipient == ctx.entity:
            return event_text
        prompt = (f"Event: {event_text}\n"
                  f"What does {recipient} perceive of this event?")
        try:
            return ctx.sample_text(prompt)
        except ProviderError as exc:
            ctx.warn("perception_fallback", f"{recipient} gets the plain event: {exc}")
            return event_text

    def postact(self, ctx: CallContext) -> None:
        action = ctx.action
        if action is None or action.spec_tag != TAG_RESOLVE:
            return
        for recipient in ctx.recipients:
            text = self._perceived(ctx, recipient, action.raw_text)
            for secret in self.secrets:
                if secret.holder == recipient and secret.step == ctx.step:
                    text = f"{text}\n(Secret: {secret.fact})"
            ctx.dispatch(recipient, text)


class Terminator(Component):
    """Answers "is the episode over?" requests; falls back to continuing."""

    type_id = "terminator"

    def preact(self, ctx: CallContext) -> None:
        spec = ctx.spec
        if spec is None or spec.tag != TAG_TERMINATE:
            return None
        prompt = _context_text(ctx) + spec.rendered(ctx.entity)
        result = ctx.sample_choice(prompt, spec.options)
        ctx.propose_action(Action.of_choice(result.raw, ctx.entity, result.option,
                                            result.index, tag=spec.tag,
                                            fallback=result.fallback))
        return None


@dataclass
class PlotBeat:
    text: str
    min_step: int = 0
    keyword: Optional[str] = None

    def matches(self, event_text: str) -> bool:
        needle = self.keyword if self.keyword is not None else self.text
        return needle.lower() in event_text.lower()


class NarrativeDirector(Component):
    """Feeds the resolver genre guidance and the current plot beat.

    Beats unlock at their earliest step and are consumed when their
    keyword shows up in a resolved event.
    """

    type_id = "narrative_director"

    def __init__(self, beats: Optional[list] = None, guidance: str = "",
                 name: Optional[str] = None):
        super().__init__(name)
        self.beats = [
            b if isinstance(b, PlotBeat)
            else PlotBeat(b["text"], int(b.get("min_step", 0)), b.get("keyword"))
            for b in (beats or [])
        ]
        self.guidance = guidance
        self.consumed = 0

    def current_beat(self, step: int) -> Optional[PlotBeat]:
        if self.consumed < len(self.beats):
            beat = self.beats[self.consumed]
            if beat.min_step <= step:
                return beat
        return None

    def preact(self, ctx: CallContext) -> ContextEntry:
        parts = []
        if self.guidance:
            parts.append(self.guidance)
        beat = self.current_beat(ctx.step)
        if beat is not None:
            parts.append(f"Steer events toward: {beat.text}")
        if not self.beats and not self.guidance:
            parts.append("(free play)")
        return self.entry("Narrative direction", "\n".join(parts) if parts else "(free play)")

    def postact(self, ctx: CallContext) -> None:
        action = ctx.action
        if action is None or action.spec_tag != TAG_RESOLVE:
            return
        beat = self.current_beat(ctx.step)
        if beat is not None and beat.matches(action.raw_text):
            self.consumed += 1

    def state_dict(self) -> dict:
        return {"consumed": self.consumed}

    def load_state(self, state: dict) -> None:
        self.consumed = state.get("consumed", 0)


def rule_wake(entity: str, now: int, seed: int, jitter: int) -> int:
    """Deterministic default: now + 1 + (seeded hash of (entity, now) mod jitter)."""
    return now + 1 + (fnv1a64(f"{entity}|{now}|{seed}") % jitter)


class Scheduler(Component):
    """Assigns the next wake time for an actor in the asynchronous engine.

    In rule mode the wake time is a seeded hash offset; in provider mode
    the model answers with a tick delta from now.
    """

    type_id = "scheduler"

    def __init__(self, mode: str = "rule", jitter: int = 5, name: Optional[str] = None):
        super().__init__(name)
        if mode not in ("rule", "provider"):
            raise ValueError(f"unknown scheduler mode {mode!r}")
        if jitter < 1:
            raise ValueError("jitter must be at least 1")
        self.mode = mode
        self.jitter = jitter

    def next_wake(self, ctx: CallContext, entity: str, now: int) -> int:
        if self.mode == "rule":
            return rule_wake(entity, now, ctx.seeds.root, self.jitter)
        prompt = (_context_text(ctx)
                  + f"It is tick {now}. In how many ticks does {entity} act next?")
        result = ctx.sample_float(prompt)
        return now + int(round(result.value))

    def preact(self, ctx: CallContext) -> None:
        spec = ctx.spec
        if spec is None or spec.tag != TAG_NEXT_WAKE:
            return None
        entity = ctx.meta.get("wake_entity", "")
        now = int(ctx.meta.get("now", ctx.sim_time))
        wake = self.next_wake(ctx, entity, now)
        ctx.propose_action(Action.of_number(str(wake), ctx.entity, wake, tag=spec.tag))
        return None


@dataclass(frozen=True)
class RubricScore:
    entity: str
    step: int
    value: float
    rationale: str


class RubricScorer(Component):
    """Scores each actor's step against a rubric, on a 0..1 scale.

    Provider mode asks for a number and clamps it; the coded max_utility
    rule awards 1.0 exactly when the actor picked the utility-maximizing
    option, without any provider call.
    """

    type_id = "rubric_scorer"

    def __init__(self, rubric: str = "", mode: str = "provider",
                 utilities: Optional[dict] = None, name: Optional[str] = None):
        super().__init__(name)
        if mode not in ("provider", "max_utility"):
            raise ValueError(f"unknown scorer mode {mode!r}")
        if mode == "max_utility" and not utilities:
            raise ValueError("max_utility mode requires a utilities table")
        self.rubric = rubric
        self.mode = mode
        self.utilities = {str(k): float(v) for k, v in (utilities or {}).items()}
        self.scores: list[RubricScore] = []

    def _max_utility_option(self) -> str:
        best = None
        for option, utility in self.utilities.items():
            if best is None or utility > best[1]:
                best = (option, utility)
        return best[0]

    def _score(self, ctx: CallContext, entity: str) -> tuple[float, str]:
        attempt = ctx.meta.get("attempt", "")
        if self.mode == "max_utility":
            attempted = ctx.meta.get("attempt_value")
            value = 1.0 if attempted == self._max_utility_option() else 0.0
            return value, f"max-utility rule on {attempted!r}"
        events = ctx.meta.get("events", ())
        event_lines = "\n".join(events)
        prompt = (f"Rubric: {self.rubric}\n"
                  f"Events this step:\n{event_lines}\n"
                  f"{entity} attempted: {attempt}\n"
                  f"Rate {entity}'s action between 0 and 1.")
        result = ctx.sample_float(prompt)
        value = result.value
        if value < 0.0 or value > 1.0:
            clamped = min(1.0, max(0.0, value))
            ctx.warn("score_clamped", f"{value} clamped to {clamped}")
            value = clamped
        return value, result.raw

    def preact(self, ctx: CallContext) -> None:
        spec = ctx.spec
        if spec is None or spec.tag != TAG_SCORE:
            return None
        entity = ctx.meta.get("score_entity", "")
        value, rationale = self._score(ctx, entity)
        self.scores.append(RubricScore(entity, ctx.step, value, rationale))
        ctx.propose_action(Action.of_number(rationale or str(value), ctx.entity, value,
                                            tag=spec.tag))
        return None

    def totals(self) -> dict[str, dict]:
        summary: dict[str, dict] = {}
        for score in self.scores:
            row = summary.setdefault(score.entity, {"total": 0.0, "count": 0})
            row["total"] += score.value
            row["count"] += 1
        for row in summary.values():
            row["mean"] = row["total"] / row["count"] if row["count"] else 0.0
        return summary

    def state_dict(self) -> dict:
        return {
            "scores": [
                {"entity": s.entity, "step": s.step, "value": s.value, "rationale": s.rationale}
                for s in self.scores
            ]
        }

    def load_state(self, state: dict) -> None:
        self.scores = [
            RubricScore(s["entity"], s["step"], s["value"], s["rationale"])
            for s in state.get("scores", [])
        ]
