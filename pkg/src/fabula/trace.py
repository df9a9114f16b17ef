"""Run traces: the JSONL event stream every run produces.

One event per line, canonical JSON, densely numbered. The trace is the
substrate for determinism checks (byte comparison), replay, crossplay
metrics, the service event feed, and the browser UI. Payloads never
contain wall-clock values.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from .canonical import canonical_json

EVENT_KINDS = (
    "run_header",
    "step_begin",
    "context",
    "action",
    "lm_call",
    "event",
    "observation",
    "warning",
    "score",
    "termination",
    "run_footer",
)

_KIND_SET = frozenset(EVENT_KINDS)


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    step: int
    sim_time: int
    entity: Optional[str]
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "step": self.step,
            "sim_time": self.sim_time,
            "entity": self.entity,
            "payload": self.payload,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict())

    @staticmethod
    def from_dict(data: dict) -> "TraceEvent":
        return TraceEvent(
            seq=data["seq"],
            kind=data["kind"],
            step=data["step"],
            sim_time=data["sim_time"],
            entity=data["entity"],
            payload=data["payload"],
        )


class TraceSink:
    """Assigns dense sequence numbers and fans events out.

    Events are kept in memory (for the service feed and tests) and
    optionally streamed to a JSONL file. Thread-safe; waiters blocked in
    wait_for can long-poll for new events.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.events: list[TraceEvent] = []
        self._cond = threading.Condition()
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def emit(self, kind: str, payload: dict, *, step: int, sim_time: int,
             entity: Optional[str] = None) -> TraceEvent:
        if kind not in _KIND_SET:
            raise ValueError(f"unknown trace event kind {kind!r}")
        with self._cond:
            event = TraceEvent(len(self.events), kind, step, sim_time, entity, payload)
            self.events.append(event)
            if self._fh is not None:
                self._fh.write(event.to_line() + "\n")
            self._cond.notify_all()
        return event

    def since(self, seq: int) -> list[TraceEvent]:
        """Events with seq > the given value."""
        with self._cond:
            start = max(seq + 1, 0)
            return self.events[start:]

    def wait_for(self, seq: int, timeout: float) -> list[TraceEvent]:
        """Long-poll: block until an event past seq exists or timeout."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while len(self.events) <= seq + 1:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._cond.wait(timeout=remaining):
                    break
            start = max(seq + 1, 0)
            return self.events[start:]

    def flush(self) -> None:
        with self._cond:
            if self._fh is not None:
                self._fh.flush()

    def close(self) -> None:
        with self._cond:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def lines(self) -> list[str]:
        with self._cond:
            return [e.to_line() for e in self.events]


def write_trace(path: str | Path, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event.to_line() + "\n")


def read_trace(path: str | Path) -> list[TraceEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(TraceEvent.from_dict(json.loads(line)))
    return events


def validate_trace_lines(lines: Iterable[str]) -> list[str]:
    """Schema-check a trace; returns problems, empty when valid.

    Checks: every line parses as a schema-complete event, seq is dense
    from 0, exactly one run_header (first) and one run_footer (last), and
    every lm_call payload carries a prompt digest and provider kind.
    """
    problems: list[str] = []
    events: list[dict] = []
    for i, line in enumerate(lines):
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {i}: not JSON: {exc}")
            continue
        for field_name, types in (
            ("seq", int), ("kind", str), ("step", int),
            ("sim_time", (int, float)), ("payload", dict),
        ):
            if not isinstance(data.get(field_name), types):
                problems.append(f"line {i}: bad or missing field {field_name!r}")
        if not (data.get("entity") is None or isinstance(data.get("entity"), str)):
            problems.append(f"line {i}: entity must be a string or null")
        if data.get("kind") not in _KIND_SET:
            problems.append(f"line {i}: unknown kind {data.get('kind')!r}")
        events.append(data)

    if problems:
        return problems
    if not events:
        return ["trace is empty"]

    for i, data in enumerate(events):
        if data["seq"] != i:
            problems.append(f"line {i}: seq {data['seq']} breaks dense numbering")
            break
    headers = [e for e in events if e["kind"] == "run_header"]
    footers = [e for e in events if e["kind"] == "run_footer"]
    if len(headers) != 1 or events[0]["kind"] != "run_header":
        problems.append("trace must start with exactly one run_header")
    if len(footers) != 1 or events[-1]["kind"] != "run_footer":
        problems.append("trace must end with exactly one run_footer")
    for data in events:
        if data["kind"] == "lm_call":
            payload = data["payload"]
            if "prompt_digest" not in payload or "provider" not in payload:
                problems.append(f"seq {data['seq']}: lm_call missing prompt_digest or provider")
    return problems
