"""The three scheduling engines: simultaneous, sequential, asynchronous.

A run is: broadcast the premise, then step until the GM terminates the
episode or the step cap is reached. Each step lets one or all actors act,
has the GM resolve every attempt into an event, dispatches observations,
optionally scores actors against a rubric, and checks termination.

Determinism: all provider randomness derives from a root seed split per
(entity, step, call ordinal), and per-call trace records are buffered and
flushed in registration order, so traces are byte-identical across runs
and across worker-thread counts.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import ActingFailure, ComponentFailure, MissingGmComponent, ProviderError
from .kernel import (
    TAG_ACTION,
    TAG_NEXT_ACTING,
    TAG_NEXT_WAKE,
    TAG_RESOLVE,
    TAG_SCORE,
    TAG_TERMINATE,
    Action,
    ActionSpec,
    CallContext,
    Entity,
    Observation,
    OutputType,
    Recorder,
    SeedAllocator,
)
from .components.gm import TERMINATION_OPTIONS, TERMINATION_QUESTION
from .lm import Provider
from .trace import TraceSink

FAILED_ACTION_TEXT = "does nothing"
PREMISE_SOURCE = "premise"

# Engine-issued GM questions get a tighter retry budget than actor-side
# sampling: three attempts, then the documented fallback.
GM_ASK_RETRIES = 2


class EngineKind(Enum):
    SIMULTANEOUS = "simultaneous"
    SEQUENTIAL = "sequential"
    ASYNCHRONOUS = "asynchronous"


@dataclass
class RunConfig:
    engine: EngineKind
    premise: str
    max_steps: int
    seed: int
    call_to_action: str = "What does {name} do next?"
    action_output_type: OutputType = OutputType.FREE
    action_options: tuple[str, ...] = ()
    rotation: Optional[tuple[str, ...]] = None
    workers: int = 1
    sample_retries: int = 3
    header_extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not self.premise:
            raise ValueError("premise must be non-empty")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class StepRecord:
    step: int
    sim_time: int
    acted: list[tuple[str, Action]] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    dispatched: list[tuple[str, Observation]] = field(default_factory=list)
    terminated: bool = False


@dataclass
class RunResult:
    records: list[StepRecord]
    reason: str
    scores: dict
    warnings: int

    @property
    def steps(self) -> int:
        return len(self.records)


class WakeQueue:
    """Min-heap of (wake_time, tiebreak_seq, entity) pops."""

    def __init__(self):
        self._heap: list[tuple[int, int, str]] = []
        self._counter = 0

    def push(self, wake_time: int, entity: str, tiebreak_seq: Optional[int] = None) -> int:
        seq = self._counter if tiebreak_seq is None else tiebreak_seq
        self._counter = max(self._counter, seq) + 1
        heapq.heappush(self._heap, (wake_time, seq, entity))
        return seq

    def pop(self) -> tuple[int, int, str]:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


def attempt_text(action: Action) -> str:
    if action.output_type is OutputType.CHOICE:
        return action.choice or ""
    if action.output_type is OutputType.FLOAT:
        return format(action.number, "g")
    return action.text or ""


class Simulation:
    """One configured run: actors, a GM, a provider, and a trace sink."""

    def __init__(
        self,
        actors: list[Entity],
        gm: Entity,
        config: RunConfig,
        sink: TraceSink,
        provider: Provider,
        channel=None,
    ):
        if not actors:
            raise ValueError("at least one actor is required")
        names = [a.name for a in actors] + [gm.name]
        if len(set(names)) != len(names):
            raise ValueError("entity names must be unique")
        self.actors = actors
        self.gm = gm
        self.config = config
        self.sink = sink
        self.provider = provider
        self.channel = channel
        self.roster = tuple(a.name for a in actors)
        self.recipients = self.roster + (gm.name,)
        self._by_name = {a.name: a for a in actors}
        self._by_name[gm.name] = gm

        if config.engine is EngineKind.SEQUENTIAL:
            if config.rotation:
                unknown = [n for n in config.rotation if n not in self._by_name or n == gm.name]
                if unknown:
                    raise ValueError(f"rotation names not in actor roster: {unknown}")
            elif not gm.has("next_acting"):
                raise MissingGmComponent("next_acting")
        if config.engine is EngineKind.ASYNCHRONOUS and not gm.has("scheduler"):
            raise MissingGmComponent("scheduler")

        self.records: list[StepRecord] = []
        self.reason: Optional[str] = None
        self._step_count = 0
        self._last_actor_index = -1
        self._warnings = 0
        self._allocators: dict[tuple[str, int], SeedAllocator] = {}
        self._started = False
        self._finished = False
        self._queue = WakeQueue()
        self._pool: Optional[ThreadPoolExecutor] = None
        if config.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=config.workers)

    # -- plumbing -----------------------------------------------------

    def _alloc(self, entity: str, step: int) -> SeedAllocator:
        key = (entity, step)
        if key not in self._allocators:
            self._allocators[key] = SeedAllocator(self.config.seed, entity, step)
        return self._allocators[key]

    def _ctx(self, entity: str, step: int, sim_time: int, *, retries: int,
             meta: Optional[dict] = None) -> CallContext:
        return CallContext(
            entity,
            provider=self.provider,
            recorder=Recorder(),
            seeds=self._alloc(entity, step),
            step=step,
            sim_time=sim_time,
            roster=self.roster,
            recipients=self.recipients,
            channel=self.channel,
            retries=retries,
            meta=meta,
        )

    def _flush(self, recorder: Recorder, step: int, sim_time: int, default_entity: str) -> None:
        for record in recorder.records:
            if record["kind"] == "warning":
                self._warnings += 1
            self.sink.emit(record["kind"], record["payload"], step=step,
                           sim_time=sim_time, entity=record["entity"] or default_entity)
        recorder.records.clear()

    def _warn(self, code: str, detail: str, step: int, sim_time: int,
              entity: Optional[str] = None) -> None:
        self._warnings += 1
        self.sink.emit("warning", {"code": code, "detail": detail}, step=step,
                       sim_time=sim_time, entity=entity)

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        header = {
            "version": 1,
            "engine": self.config.engine.value,
            "premise": self.config.premise,
            "seed": self.config.seed,
            "max_steps": self.config.max_steps,
            "actors": list(self.roster),
            "gm": self.gm.name,
        }
        header.update(self.config.header_extra)
        self.sink.emit("run_header", header, step=0, sim_time=0)
        for name in self.recipients:
            event = self.sink.emit("observation",
                                   {"text": self.config.premise, "source": PREMISE_SOURCE},
                                   step=0, sim_time=0, entity=name)
            obs = Observation(self.config.premise, 0, event.seq, PREMISE_SOURCE)
            self._observe(name, obs, step=0, sim_time=0)
        if self.config.engine is EngineKind.ASYNCHRONOUS:
            for i, actor in enumerate(self.actors):
                self._queue.push(0, actor.name, i)

    def _observe(self, name: str, obs: Observation, step: int, sim_time: int) -> None:
        ctx = self._ctx(name, step, sim_time, retries=self.config.sample_retries)
        try:
            self._by_name[name].observe(obs, ctx)
        except ComponentFailure as exc:
            ctx.warn("observe_failure", str(exc))
        self._flush(ctx.recorder, step, sim_time, name)

    @property
    def finished(self) -> bool:
        return self._finished or self.reason is not None or self._step_count >= self.config.max_steps

    def step(self) -> Optional[StepRecord]:
        """Advance one step; None once the run is over."""
        if not self._started:
            self.start()
        if self.finished:
            return None
        engine = self.config.engine
        if engine is EngineKind.SIMULTANEOUS:
            record = self._step_simultaneous()
        elif engine is EngineKind.SEQUENTIAL:
            record = self._step_sequential()
        else:
            record = self._step_asynchronous()
        self.records.append(record)
        self._step_count += 1
        if record.terminated:
            self.reason = "gm"
            self.sink.emit("termination", {"reason": "gm"}, step=record.step,
                           sim_time=record.sim_time)
        elif self._step_count >= self.config.max_steps:
            self.reason = "max_steps"
            self.sink.emit("termination", {"reason": "max_steps"}, step=record.step,
                           sim_time=record.sim_time)
        return record

    def run(self) -> RunResult:
        self.start()
        while not self.finished:
            self.step()
        return self.finish()

    def finish(self) -> RunResult:
        if self._finished:
            return self._result
        self._finished = True
        if self._pool is not None:
            self._pool.shutdown(wait=True)
        scores = {}
        scorer = self.gm.find("rubric_scorer")
        if scorer is not None:
            scores = scorer.totals()
        last = self.records[-1] if self.records else None
        footer = {
            "steps": self._step_count,
            "reason": self.reason or "max_steps",
            "terminated": self.reason == "gm",
            "scores": scores,
            "warnings": self._warnings,
        }
        self.sink.emit("run_footer", footer,
                       step=last.step if last else 0,
                       sim_time=last.sim_time if last else 0)
        self.sink.flush()
        self._result = RunResult(self.records, self.reason or "max_steps",
                                 scores, self._warnings)
        return self._result

    # -- acting ---------------------------------------------------------

    def _actor_spec(self) -> ActionSpec:
        return ActionSpec(self.config.call_to_action, self.config.action_output_type,
                          self.config.action_options, tag=TAG_ACTION)

    def _act_one(self, actor: Entity, step: int, sim_time: int) -> tuple[CallContext, Action]:
        ctx = self._ctx(actor.name, step, sim_time, retries=self.config.sample_retries)
        try:
            action = actor.act(self._actor_spec(), ctx)
        except (ComponentFailure, ActingFailure) as exc:
            # infrastructure failures abort the run; component bugs degrade
            if isinstance(exc.__cause__, ProviderError):
                raise exc.__cause__
            ctx.warn("actor_failure", f"{actor.name}: {exc}")
            action = Action.free(FAILED_ACTION_TEXT, actor.name, tag=TAG_ACTION, fallback=True)
        return ctx, action

    def _emit_action(self, ctx: CallContext, actor_name: str, action: Action,
                     step: int, sim_time: int) -> None:
        self._flush(ctx.recorder, step, sim_time, actor_name)
        self.sink.emit("action", action.to_payload(), step=step, sim_time=sim_time,
                       entity=actor_name)

    def _ask_gm(self, spec: ActionSpec, meta: dict, step: int,
                sim_time: int) -> tuple[Optional[Action], CallContext]:
        ctx = self._ctx(self.gm.name, step, sim_time, retries=GM_ASK_RETRIES, meta=meta)
        try:
            action = self.gm.act(spec, ctx)
        except (ComponentFailure, ActingFailure) as exc:
            if isinstance(exc.__cause__, ProviderError):
                raise exc.__cause__
            ctx.warn("gm_failure", str(exc))
            action = None
        self._flush(ctx.recorder, step, sim_time, self.gm.name)
        return action, ctx

    def _resolve(self, actor_name: str, action: Action, step: int, sim_time: int,
                 record: StepRecord) -> None:
        """One attempt -> one event -> observations for everyone."""
        attempt = attempt_text(action)
        spec = ActionSpec(
            f"{actor_name} attempts: {attempt}\nWhat actually happens?",
            OutputType.FREE, tag=TAG_RESOLVE,
        )
        meta = {"attempt": attempt, "attempt_actor": actor_name,
                "attempt_value": action.value}
        gm_action, ctx = self._ask_gm(spec, meta, step, sim_time)
        if gm_action is not None:
            event_text = gm_action.raw_text
            fallback = gm_action.fallback
            outbox = list(ctx.outbox)
        else:
            event_text = attempt
            fallback = True
            outbox = []
        if not outbox:
            outbox = [(name, event_text) for name in self.recipients]
        self.sink.emit("event",
                       {"actor": actor_name, "attempt": attempt,
                        "text": event_text, "fallback": fallback},
                       step=step, sim_time=sim_time, entity=self.gm.name)
        record.events.append(event_text)
        for recipient, text in outbox:
            event = self.sink.emit("observation", {"text": text, "source": self.gm.name},
                                   step=step, sim_time=sim_time, entity=recipient)
            obs = Observation(text, sim_time, event.seq, self.gm.name)
            self._observe(recipient, obs, step, sim_time)
            record.dispatched.append((recipient, obs))

    def _score_actors(self, step: int, sim_time: int,
                      attempts: dict[str, Action], events: list[str]) -> None:
        if not self.gm.has("rubric_scorer"):
            return
        for actor in self.actors:
            action = attempts.get(actor.name)
            meta = {
                "score_entity": actor.name,
                "attempt": attempt_text(action) if action else "",
                "attempt_value": action.value if action else None,
                "events": list(events),
            }
            spec = ActionSpec(f"Rate {actor.name}'s action this step from 0 to 1.",
                              OutputType.FLOAT, tag=TAG_SCORE)
            gm_action, _ = self._ask_gm(spec, meta, step, sim_time)
            value = gm_action.number if gm_action is not None else 0.0
            rationale = gm_action.raw_text if gm_action is not None else "(gm failure)"
            self.sink.emit("score", {"entity": actor.name, "value": value,
                                     "rationale": rationale},
                           step=step, sim_time=sim_time, entity=actor.name)

    def _check_termination(self, step: int, sim_time: int) -> bool:
        if not self.gm.has("terminator"):
            return False
        spec = ActionSpec(TERMINATION_QUESTION, OutputType.CHOICE,
                          TERMINATION_OPTIONS, tag=TAG_TERMINATE)
        action, _ = self._ask_gm(spec, {}, step, sim_time)
        return action is not None and action.choice == "yes" and not action.fallback

    # -- the three engines ----------------------------------------------

    def _step_simultaneous(self) -> StepRecord:
        step = self._step_count
        sim_time = step + 1
        record = StepRecord(step, sim_time)
        self.sink.emit("step_begin", {"acting": list(self.roster)},
                       step=step, sim_time=sim_time)

        serialize = self._pool is None or self.provider.order_sensitive
        results: dict[str, tuple[CallContext, Action]] = {}
        if serialize:
            for actor in self.actors:
                results[actor.name] = self._act_one(actor, step, sim_time)
        else:
            futures = {a.name: self._pool.submit(self._act_one, a, step, sim_time)
                       for a in self.actors}
            for name, future in futures.items():
                results[name] = future.result()

        for actor in self.actors:
            ctx, action = results[actor.name]
            self._emit_action(ctx, actor.name, action, step, sim_time)
            record.acted.append((actor.name, action))

        for actor_name, action in record.acted:
            self._resolve(actor_name, action, step, sim_time, record)

        self._score_actors(step, sim_time, dict(record.acted), record.events)
        record.terminated = self._check_termination(step, sim_time)
        return record

    def _select_actor(self, step: int, sim_time: int) -> Entity:
        if self.config.rotation:
            name = self.config.rotation[step % len(self.config.rotation)]
            self._last_actor_index = self.roster.index(name)
            return self._by_name[name]
        spec = ActionSpec("Whose turn is next?", OutputType.CHOICE,
                          self.roster, tag=TAG_NEXT_ACTING)
        action, _ = self._ask_gm(spec, {}, step, sim_time)
        fallback = action is None or action.fallback
        if fallback:
            index = (self._last_actor_index + 1) % len(self.actors)
            name = self.actors[index].name
            self._warn("next_acting_fallback",
                       f"round-robin selected {name}", step, sim_time, self.gm.name)
        else:
            name = action.choice
            index = self.roster.index(name)
        self.sink.emit("action", {"tag": TAG_NEXT_ACTING, "selected": name,
                                  "fallback": fallback},
                       step=step, sim_time=sim_time, entity=self.gm.name)
        self._last_actor_index = index
        return self._by_name[name]

    def _step_sequential(self) -> StepRecord:
        step = self._step_count
        sim_time = step + 1
        record = StepRecord(step, sim_time)
        acting = []
        if self.config.rotation:
            acting = [self.config.rotation[step % len(self.config.rotation)]]
        self.sink.emit("step_begin", {"acting": acting}, step=step, sim_time=sim_time)
        actor = self._select_actor(step, sim_time)
        ctx, action = self._act_one(actor, step, sim_time)
        self._emit_action(ctx, actor.name, action, step, sim_time)
        record.acted.append((actor.name, action))
        self._resolve(actor.name, action, step, sim_time, record)
        self._score_actors(step, sim_time, dict(record.acted), record.events)
        record.terminated = self._check_termination(step, sim_time)
        return record

    def _step_asynchronous(self) -> StepRecord:
        step = self._step_count
        wake_time, _, name = self._queue.pop()
        sim_time = wake_time
        record = StepRecord(step, sim_time)
        self.sink.emit("step_begin", {"acting": [name]}, step=step, sim_time=sim_time)
        actor = self._by_name[name]
        ctx, action = self._act_one(actor, step, sim_time)
        self._emit_action(ctx, name, action, step, sim_time)
        record.acted.append((name, action))
        self._resolve(name, action, step, sim_time, record)
        self._score_actors(step, sim_time, dict(record.acted), record.events)

        spec = ActionSpec(f"When does {name} act next?", OutputType.FLOAT,
                          tag=TAG_NEXT_WAKE)
        gm_action, _ = self._ask_gm(spec, {"wake_entity": name, "now": wake_time},
                                    step, sim_time)
        wake = int(gm_action.number) if gm_action is not None else wake_time + 1
        clamped = wake <= wake_time
        if clamped:
            wake = wake_time + 1
            self._warn("wake_clamped", f"{name} rescheduled to {wake}",
                       step, sim_time, self.gm.name)
        self.sink.emit("action", {"tag": TAG_NEXT_WAKE, "target": name,
                                  "wake_time": wake, "clamped": clamped},
                       step=step, sim_time=sim_time, entity=self.gm.name)
        self._queue.push(wake, name)
        record.terminated = self._check_termination(step, sim_time)
        return record
