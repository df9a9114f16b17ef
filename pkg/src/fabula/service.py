"""HTTP session service: interactive scenario runs for human players.

Each session owns a worker thread driving the engine; HTTP handlers talk
to it through a mailbox. A blocked human turn surfaces as WAITING_HUMAN
with a pending action request; submissions are validated by the same
component code that validates provider output.
"""

from __future__ import annotations

import json
import re
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from queue import Empty, Queue
from typing import Optional

from . import scenario
from .canonical import canonical_json
from .components.actor import ActionChannel, PendingActionRequest, Submission
from .engines import EngineKind, Simulation
from .errors import ChannelClosed
from .lm import provider_from_config
from .prefabs import get_prefab, list_prefabs
from .trace import TraceSink

MODE_AUTO = "auto"
MODE_STEP = "step"

STATUS_RUNNING = "running"
STATUS_WAITING_HUMAN = "waiting_human"
STATUS_PAUSED = "paused"
STATUS_DONE = "done"
STATUS_FAILED = "failed"

# how long a handler waits for the engine to acknowledge a submission
_VERDICT_TIMEOUT = 30.0


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str = "", report=None):
        super().__init__(detail or error)
        self.status = status
        self.error = error
        self.detail = detail
        self.report = report or []

    def body(self) -> dict:
        payload = {"error": self.error, "detail": self.detail}
        if self.report:
            payload["report"] = [
                {"path": item.path, "code": item.code, "message": item.message}
                for item in self.report
            ]
        return payload


class _ServiceSubmission(Submission):
    def __init__(self, text: str):
        super().__init__(text)
        self.decided = threading.Event()
        self.accepted = False
        self.detail = ""

    def respond(self, accepted: bool, detail: str = "") -> None:
        self.accepted = accepted
        self.detail = detail
        self.decided.set()


@dataclass
class _Pending:
    request_id: str
    request: PendingActionRequest


class HumanMailbox(ActionChannel):
    """Bridges a blocked human_acting component and HTTP submissions."""

    def __init__(self, session: "Session"):
        self.session = session
        self._cond = threading.Condition()
        self._pending: Optional[_Pending] = None
        self._submission: Optional[_ServiceSubmission] = None
        self._closed = False

    def request_action(self, request: PendingActionRequest,
                       timeout: Optional[float]) -> Optional[Submission]:
        with self._cond:
            if self._closed:
                raise ChannelClosed("session is closing")
            # an invalid submission keeps the same pending request id
            if self._pending is None or self._pending.request is not request:
                self._pending = _Pending(uuid.uuid4().hex, request)
            self.session._set_status(STATUS_WAITING_HUMAN)
            if not self._cond.wait_for(
                    lambda: self._submission is not None or self._closed,
                    timeout=timeout):
                self._pending = None
                self.session._set_status(STATUS_RUNNING)
                return None
            if self._closed and self._submission is None:
                self._pending = None
                raise ChannelClosed("session is closing")
            submission = self._submission
            self._submission = None
            return submission

    def pending(self) -> Optional[_Pending]:
        with self._cond:
            return self._pending

    def submit(self, request_id: str, text: str) -> _ServiceSubmission:
        with self._cond:
            if self._pending is None or self._pending.request_id != request_id:
                raise ApiError(409, "stale_request", "no pending request with that id")
            submission = _ServiceSubmission(text)
            self._submission = submission
            self._cond.notify_all()
        if not submission.decided.wait(timeout=_VERDICT_TIMEOUT):
            raise ApiError(409, "engine_unresponsive", "the engine did not process the submission")
        return submission

    def accept_clears_pending(self) -> None:
        with self._cond:
            self._pending = None
        self.session._set_status(STATUS_RUNNING)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._pending = None
            self._cond.notify_all()


class _SessionChannel(ActionChannel):
    """Adapter: marks accepted submissions as consuming the pending slot."""

    def __init__(self, mailbox: HumanMailbox):
        self.mailbox = mailbox

    def request_action(self, request, timeout):
        submission = self.mailbox.request_action(request, timeout)
        if submission is None:
            return None
        return _TrackedSubmission(submission, self.mailbox)


class _TrackedSubmission(Submission):
    def __init__(self, inner: _ServiceSubmission, mailbox: HumanMailbox):
        super().__init__(inner.text)
        self._inner = inner
        self._mailbox = mailbox

    def respond(self, accepted: bool, detail: str = "") -> None:
        if accepted:
            self._mailbox.accept_clears_pending()
        self._inner.respond(accepted, detail)


class Session:
    """One interactive run: engine state plus its worker thread."""

    def __init__(self, session_id: str, doc: dict, mode: str, sink_path=None):
        self.id = session_id
        self.doc = doc
        self.mode = mode
        self.status = STATUS_PAUSED
        self.error = ""
        self._status_cond = threading.Condition()
        self._busy = False
        self._pause_requested = False
        self._stopped = False

        actors, gm, config = scenario.instantiate(doc)
        self.sink = TraceSink(sink_path)
        self.mailbox = HumanMailbox(self)
        provider = provider_from_config(doc.get("provider", {"kind": "echo"}))
        self.sim = Simulation(actors, gm, config, self.sink, provider,
                              channel=_SessionChannel(self.mailbox))
        self.sim.start()

        self._commands: Queue = Queue()
        self._worker = threading.Thread(target=self._loop, name=f"session-{session_id}",
                                        daemon=True)
        self._worker.start()

    # -- status plumbing -------------------------------------------------

    def _set_status(self, status: str) -> None:
        with self._status_cond:
            if self.status in (STATUS_DONE, STATUS_FAILED):
                return
            self.status = status
            self._status_cond.notify_all()

    def snapshot(self) -> dict:
        with self._status_cond:
            return {
                "id": self.id,
                "status": self.status,
                "mode": self.mode,
                "scenario": self.doc.get("name", ""),
                "cursor": len(self.sink.events) - 1,
                "error": self.error,
            }

    # -- worker ----------------------------------------------------------

    def _loop(self) -> None:
        while True:
            try:
                command = self._commands.get(timeout=0.25)
            except Empty:
                if self._stopped:
                    return
                continue
            if command == "stop":
                return
            try:
                self._set_status(STATUS_RUNNING)
                if command == "step":
                    self.sim.step()
                else:
                    while (not self.sim.finished and not self._pause_requested
                           and not self._stopped):
                        self.sim.step()
                if self.sim.finished:
                    self.sim.finish()
                    self._set_status(STATUS_DONE)
                else:
                    self._set_status(STATUS_PAUSED)
            except Exception as exc:
                self.error = str(exc)
                self._set_status(STATUS_FAILED)
            finally:
                self._pause_requested = False
                with self._status_cond:
                    self._busy = False
                    self._status_cond.notify_all()

    def start_execution(self, command: str) -> dict:
        """Enqueue a step/resume; exactly one caller wins a busy session."""
        with self._status_cond:
            if self.status in (STATUS_DONE, STATUS_FAILED):
                raise ApiError(409, "finished", f"session is {self.status}")
            if self._busy:
                raise ApiError(409, "busy", "a step is already executing")
            self._busy = True
        self._commands.put(command)
        with self._status_cond:
            self._status_cond.wait_for(
                lambda: not self._busy or self.status == STATUS_WAITING_HUMAN,
                timeout=_VERDICT_TIMEOUT)
        return self.snapshot()

    def pause(self) -> dict:
        self._pause_requested = True
        return self.snapshot()

    def stop(self) -> None:
        self._stopped = True
        self.mailbox.close()
        self._commands.put("stop")

    def pending_payload(self) -> Optional[dict]:
        pending = self.mailbox.pending()
        if pending is None:
            return None
        req = pending.request
        return {
            "request_id": pending.request_id,
            "entity": req.entity,
            "call_to_action": req.call_to_action,
            "output_type": req.output_type,
            "options": list(req.options),
            "context": req.context,
            "step": req.step,
        }


def _count_human_actors(doc: dict) -> int:
    count = 0
    for entry in doc.get("actors", []):
        if isinstance(entry, dict):
            prefab = get_prefab(entry.get("prefab", ""))
            if prefab is not None and prefab.has_component("human_acting"):
                count += 1
    return count


class SessionService:
    """In-memory session table plus the bundled scenario catalog."""

    def __init__(self, max_sessions: int = 32, poll_timeout: float = 25.0,
                 scenario_dir: Optional[Path] = None):
        self.max_sessions = max_sessions
        self.poll_timeout = poll_timeout
        self.scenario_dir = scenario_dir or _bundled_scenario_dir()
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- session operations ----------------------------------------------

    def create_session(self, doc: dict, mode: str) -> Session:
        if mode not in (MODE_AUTO, MODE_STEP):
            raise ApiError(422, "bad_mode", f"mode must be {MODE_AUTO!r} or {MODE_STEP!r}")
        report = scenario.validate(doc)
        if report:
            raise ApiError(422, "invalid_scenario", "scenario failed validation", report)
        humans = _count_human_actors(doc)
        if humans > 1:
            raise ApiError(422, "too_many_humans", "at most one human actor per session")
        if humans and doc.get("engine") == EngineKind.ASYNCHRONOUS.value:
            raise ApiError(422, "unsupported_engine",
                           "human actors require the sequential or simultaneous engine")
        with self._lock:
            if len(self._sessions) >= self.max_sessions:
                raise ApiError(409, "capacity", "session limit reached")
            session = Session(uuid.uuid4().hex, doc, mode)
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def delete(self, session_id: str) -> None:
        session = self.get(session_id)
        session.stop()
        with self._lock:
            self._sessions.pop(session_id, None)

    def close(self) -> None:
        with self._lock:
            sessions = list(self._sessions.values())
            self._sessions.clear()
        for session in sessions:
            session.stop()

    # -- catalogs ----------------------------------------------------------

    def scenario_catalog(self) -> list[dict]:
        catalog = []
        if self.scenario_dir and self.scenario_dir.is_dir():
            for path in sorted(self.scenario_dir.glob("*.scenario.json")):
                try:
                    doc = scenario.load_doc(path)
                except Exception:
                    continue
                catalog.append({
                    "id": path.stem.replace(".scenario", ""),
                    "name": doc.get("name", path.stem),
                    "engine": doc.get("engine", ""),
                    "premise": doc.get("premise", ""),
                    "doc": doc,
                })
        return catalog

    def resolve_scenario(self, body: dict) -> dict:
        if "scenario" in body:
            if not isinstance(body["scenario"], dict):
                raise ApiError(400, "bad_request", "scenario must be an object")
            return body["scenario"]
        if "scenario_id" in body:
            for item in self.scenario_catalog():
                if item["id"] == body["scenario_id"]:
                    return item["doc"]
            raise ApiError(404, "unknown_scenario", f"no bundled scenario {body['scenario_id']!r}")
        raise ApiError(400, "bad_request", "body needs a scenario or scenario_id")


def _bundled_scenario_dir() -> Optional[Path]:
    here = Path(__file__).parent / "data" / "scenarios"
    return here if here.is_dir() else None


# -- HTTP layer ---------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)$"), "get_session"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/step$"), "step"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/resume$"), "resume"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/pause$"), "pause"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/events$"), "events"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/pending$"), "pending"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/actions$"), "actions"),
    ("DELETE", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)$"), "delete"),
    ("GET", re.compile(r"^/prefabs$"), "prefabs"),
    ("GET", re.compile(r"^/scenarios$"), "scenarios"),
]


class _Handler(BaseHTTPRequestHandler):
    service: SessionService
    protocol_version = "HTTP/1.1"

    def log_message(self, *args) -> None:
        pass

    # -- dispatch -------------------------------------------------------

    def _dispatch(self, method: str) -> None:
        path, _, query = self.path.partition("?")
        for verb, pattern, name in _ROUTES:
            if verb != method:
                continue
            match = pattern.match(path)
            if match:
                try:
                    getattr(self, f"_op_{name}")(match.groupdict(), _parse_query(query))
                except ApiError as exc:
                    self._send(exc.status, exc.body())
                except Exception as exc:
                    self._send(500, {"error": "internal", "detail": str(exc)})
                return
        self._send(404, {"error": "not_found", "detail": path})

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_DELETE(self) -> None:
        self._dispatch("DELETE")

    # -- helpers --------------------------------------------------------

    def _send(self, status: int, payload: Optional[dict]) -> None:
        body = canonical_json(payload).encode("utf-8") if payload is not None else b""
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, "bad_json", str(exc))
        if not isinstance(data, dict):
            raise ApiError(400, "bad_json", "body must be a JSON object")
        return data

    # -- operations -------------------------------------------------------

    def _op_create(self, _params, _query) -> None:
        body = self._body()
        doc = self.service.resolve_scenario(body)
        mode = body.get("mode", MODE_STEP)
        session = self.service.create_session(doc, mode)
        self._send(201, session.snapshot())

    def _op_get_session(self, params, _query) -> None:
        self._send(200, self.service.get(params["sid"]).snapshot())

    def _op_step(self, params, _query) -> None:
        self._send(200, self.service.get(params["sid"]).start_execution("step"))

    def _op_resume(self, params, _query) -> None:
        self._send(200, self.service.get(params["sid"]).start_execution("resume"))

    def _op_pause(self, params, _query) -> None:
        self._send(200, self.service.get(params["sid"]).pause())

    def _op_events(self, params, query) -> None:
        session = self.service.get(params["sid"])
        try:
            since = int(query.get("since", "-1"))
        except ValueError:
            raise ApiError(400, "bad_request", "since must be an integer")
        events = session.sink.wait_for(since, timeout=self.service.poll_timeout)
        self._send(200, {
            "events": [e.to_dict() for e in events],
            "status": session.snapshot()["status"],
        })

    def _op_pending(self, params, _query) -> None:
        session = self.service.get(params["sid"])
        self._send(200, {
            "pending": session.pending_payload(),
            "status": session.snapshot()["status"],
        })

    def _op_actions(self, params, _query) -> None:
        session = self.service.get(params["sid"])
        body = self._body()
        request_id = body.get("request_id", "")
        text = body.get("text", "")
        if not isinstance(text, str):
            raise ApiError(400, "bad_request", "text must be a string")
        submission = session.mailbox.submit(request_id, text)
        if not submission.accepted:
            raise ApiError(422, "invalid_action", submission.detail)
        self._send(200, session.snapshot())

    def _op_delete(self, params, _query) -> None:
        self.service.delete(params["sid"])
        self._send(204, None)

    def _op_prefabs(self, _params, _query) -> None:
        self._send(200, {"prefabs": [p.to_dict() for p in list_prefabs()]})

    def _op_scenarios(self, _params, _query) -> None:
        catalog = self.service.scenario_catalog()
        self._send(200, {"scenarios": catalog})


def _parse_query(query: str) -> dict[str, str]:
    params = {}
    for part in query.split("&"):
        if "=" in part:
            key, _, value = part.partition("=")
            params[key] = value
    return params


def make_server(service: SessionService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
