"""Language-model providers, typed sampling, and the record/replay cassette.

Providers turn a PromptRequest into text. The deterministic stubs
(scripted queue, seed-keyed echo hash) make whole runs reproducible;
record/replay wraps any provider with a file-backed cassette; the remote
client speaks a chat-completion-style HTTP API with exponential backoff.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .canonical import canonical_json, fnv1a64, sha256_hex
from .errors import CassetteMiss, ProviderError, ProviderExhausted, RemoteError

DEFAULT_RETRIES = 3

_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class ProviderKind(Enum):
    SCRIPTED = "scripted"
    ECHO_HASH = "echo_hash"
    RECORD = "record"
    REPLAY = "replay"
    REMOTE = "remote"


@dataclass(frozen=True)
class PromptRequest:
    text: str
    max_tokens: int = 256
    temperature: float = 0.0
    stop: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not self.text:
            raise ValueError("prompt text must be non-empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")

    def canonical(self) -> str:
        return canonical_json({
            "text": self.text,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": list(self.stop),
            "seed": self.seed,
        })


@dataclass(frozen=True)
class Completion:
    text: str
    provider: str
    attempts: int = 1


def request_key(req: PromptRequest) -> str:
    """64-bit cassette key over the canonical request form, as hex."""
    return format(fnv1a64(req.canonical()), "016x")


@dataclass
class GenDefaults:
    max_tokens: int = 256
    temperature: float = 0.0
    stop: tuple[str, ...] = ()


class Provider:
    """Interface all providers implement; safe for concurrent calls."""

    kind: ProviderKind
    # When True, responses are tied to call order (a shared queue), so the
    # engine must not interleave calls from parallel actors.
    order_sensitive: bool = False

    def __init__(self, defaults: Optional[GenDefaults] = None):
        self.defaults = defaults or GenDefaults()

    def make_request(self, text: str, *, seed: int = 0, **overrides) -> PromptRequest:
        return PromptRequest(
            text=text,
            max_tokens=overrides.get("max_tokens", self.defaults.max_tokens),
            temperature=overrides.get("temperature", self.defaults.temperature),
            stop=tuple(overrides.get("stop", self.defaults.stop)),
            seed=seed,
        )

    def complete(self, req: PromptRequest) -> Completion:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ScriptedProvider(Provider):
    """Pops canned responses from a FIFO queue; exhausts when empty."""

    kind = ProviderKind.SCRIPTED
    order_sensitive = True

    def __init__(self, responses: Iterable[str], defaults: Optional[GenDefaults] = None):
        super().__init__(defaults)
        self._queue: deque[str] = deque(responses)
        self._served = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, defaults: Optional[GenDefaults] = None) -> "ScriptedProvider":
        """Load a script: a JSON array of strings, or one response per line."""
        raw = Path(path).read_text(encoding="utf-8")
        stripped = raw.lstrip()
        if stripped.startswith("["):
            responses = json.loads(raw)
            if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
                raise ProviderError(f"script file {path} must be a JSON array of strings")
        else:
            responses = [line for line in raw.splitlines() if line]
        return cls(responses, defaults)

    def complete(self, req: PromptRequest) -> Completion:
        with self._lock:
            if not self._queue:
                raise ProviderExhausted(f"scripted provider exhausted after {self._served} responses")
            self._served += 1
            return Completion(self._queue.popleft(), self.kind.value)

    @property
    def remaining(self) -> int:
        return len(self._queue)


class EchoHashProvider(Provider):
    """Deterministic stub: response is a hash of (prompt text, seed)."""

    kind = ProviderKind.ECHO_HASH

    def complete(self, req: PromptRequest) -> Completion:
        digest = fnv1a64(req.text) ^ req.seed
        return Completion("RESP-" + format(digest, "016x"), self.kind.value)


class RecordingProvider(Provider):
    """Wraps another provider, appending every exchange to a cassette file."""

    kind = ProviderKind.RECORD

    def __init__(self, inner: Provider, cassette_path: str | Path):
        super().__init__(inner.defaults)
        self.inner = inner
        self.order_sensitive = inner.order_sensitive
        self._path = Path(cassette_path)
        self._file = open(self._path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def complete(self, req: PromptRequest) -> Completion:
        with self._lock:
            completion = self.inner.complete(req)
            entry = {
                "key_hex": request_key(req),
                "request_digest": sha256_hex(req.canonical()),
                "response": completion.text,
                "provider": completion.provider,
                "attempts": completion.attempts,
            }
            self._file.write(json.dumps(entry, sort_keys=True) + "\n")
            self._file.flush()
            return completion

    def close(self) -> None:
        self._file.close()
        self.inner.close()


class ReplayProvider(Provider):
    """Serves recorded responses by request key, FIFO within duplicate keys."""

    kind = ProviderKind.REPLAY

    def __init__(self, cassette_path: str | Path, defaults: Optional[GenDefaults] = None):
        super().__init__(defaults)
        self._path = Path(cassette_path)
        if not self._path.exists():
            raise ProviderError(f"cassette not found: {self._path}")
        self._entries: dict[str, deque[dict]] = {}
        with open(self._path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProviderError(f"bad cassette line {line_no}: {exc}") from exc
                self._entries.setdefault(entry["key_hex"], deque()).append(entry)
        self._lock = threading.Lock()

    def complete(self, req: PromptRequest) -> Completion:
        key = request_key(req)
        with self._lock:
            bucket = self._entries.get(key)
            if not bucket:
                raise CassetteMiss(f"no recorded response for request key {key}")
            entry = bucket.popleft()
        return Completion(
            entry["response"],
            entry.get("provider", self.kind.value),
            entry.get("attempts", 1),
        )


class RemoteProvider(Provider):
    """Client for a chat-completion-style HTTP endpoint.

    Retries on 429/5xx/transport failures with 0.5s * 2^k backoff, at most
    five attempts per request.
    """

    kind = ProviderKind.REMOTE

    MAX_ATTEMPTS = 5
    BACKOFF_BASE = 0.5

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        *,
        timeout: float = 30.0,
        sleeper: Callable[[float], None] = time.sleep,
        defaults: Optional[GenDefaults] = None,
    ):
        super().__init__(defaults)
        if not base_url:
            raise ProviderError("remote provider requires a base URL")
        if not model:
            raise ProviderError("remote provider requires a model id")
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._sleep = sleeper

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteProvider":
        base_url = os.environ.get("FABULA_LM_BASE_URL", "")
        model = os.environ.get("FABULA_LM_MODEL", "")
        api_key = os.environ.get("FABULA_LM_API_KEY")
        return cls(base_url, model, api_key, **kwargs)

    def complete(self, req: PromptRequest) -> Completion:
        import requests

        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.text}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "stop": list(req.stop),
            "seed": req.seed,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_detail = ""
        status: Optional[int] = None
        for attempt in range(1, self.MAX_ATTEMPTS + 1):
            try:
                resp = requests.post(self.base_url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                status, last_detail = None, str(exc)
            else:
                status = resp.status_code
                if status == 429 or 500 <= status < 600:
                    last_detail = f"HTTP {status}"
                elif status != 200:
                    raise RemoteError(status, attempt, f"HTTP {status}: {resp.text[:200]}")
                else:
                    return Completion(self._extract_text(resp, attempt), self.kind.value, attempt)
            if attempt < self.MAX_ATTEMPTS:
                self._sleep(self.BACKOFF_BASE * (2 ** (attempt - 1)))
        raise RemoteError(status, self.MAX_ATTEMPTS, last_detail)

    def _extract_text(self, resp, attempt: int) -> str:
        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"]["content"] if "message" in choice else choice["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteError(resp.status_code, attempt, f"malformed completion body: {exc}")
        if not isinstance(text, str) or not text:
            raise RemoteError(resp.status_code, attempt, "empty completion text")
        return text


# -- typed sampling ---------------------------------------------------------


@dataclass(frozen=True)
class ChoiceResult:
    index: int
    option: str
    fallback: bool = False
    raw: str = ""
    attempts: int = 1


@dataclass(frozen=True)
class FloatResult:
    value: float
    fallback: bool = False
    raw: str = ""
    attempts: int = 1


def match_choice(text: str, options: Sequence[str]) -> Optional[int]:
    """Case-insensitive exact option text, or the option's 1-based numeral."""
    cleaned = text.strip()
    lowered = cleaned.casefold()
    for i, option in enumerate(options):
        if lowered == option.casefold():
            return i
    if cleaned.isdigit():
        n = int(cleaned)
        if 1 <= n <= len(options):
            return n - 1
    return None


def parse_float(text: str) -> Optional[float]:
    """First maximal decimal-literal substring, or None."""
    m = _FLOAT_RE.search(text)
    if m is None:
        return None
    try:
        return float(m.group(0))
    except ValueError:
        return None


def _choice_prompt(prompt: str, options: Sequence[str]) -> str:
    lines = "\n".join(f"{i + 1}. {opt}" for i, opt in enumerate(options))
    return f"{prompt}\nOptions:\n{lines}\nAnswer with the option text or its number."


def _float_prompt(prompt: str) -> str:
    return f"{prompt}\nAnswer with a single number."


def sample_text(
    provider: Provider,
    req: PromptRequest,
    on_call: Optional[Callable[[PromptRequest, Completion], None]] = None,
) -> str:
    completion = provider.complete(req)
    if on_call is not None:
        on_call(req, completion)
    return completion.text


def sample_choice(
    provider: Provider,
    prompt: str,
    options: Sequence[str],
    retries: int = DEFAULT_RETRIES,
    *,
    seeds: Optional[Callable[[], int]] = None,
    on_call: Optional[Callable[[PromptRequest, Completion], None]] = None,
) -> ChoiceResult:
    """Ask until the answer names one option; total via the index-0 fallback."""
    if not options or len(set(options)) != len(options) or any(not o for o in options):
        raise ValueError("options must be unique, non-empty strings")
    if retries < 0:
        raise ValueError("retries must be nonnegative")
    full = _choice_prompt(prompt, options)
    raw = ""
    attempts = 0
    for attempt in range(retries + 1):
        seed = seeds() if seeds else 0
        req = provider.make_request(full, seed=seed)
        try:
            completion = provider.complete(req)
        except ProviderExhausted:
            break
        attempts = attempt + 1
        if on_call is not None:
            on_call(req, completion)
        raw = completion.text
        idx = match_choice(raw, options)
        if idx is not None:
            return ChoiceResult(idx, options[idx], raw=raw, attempts=attempts)
    return ChoiceResult(0, options[0], fallback=True, raw=raw, attempts=attempts)


def sample_float(
    provider: Provider,
    prompt: str,
    retries: int = DEFAULT_RETRIES,
    *,
    seeds: Optional[Callable[[], int]] = None,
    on_call: Optional[Callable[[PromptRequest, Completion], None]] = None,
) -> FloatResult:
    """Ask until a decimal literal appears; total via the 0.0 fallback."""
    if retries < 0:
        raise ValueError("retries must be nonnegative")
    full = _float_prompt(prompt)
    raw = ""
    attempts = 0
    for attempt in range(retries + 1):
        seed = seeds() if seeds else 0
        req = provider.make_request(full, seed=seed)
        try:
            completion = provider.complete(req)
        except ProviderExhausted:
            break
        attempts = attempt + 1
        if on_call is not None:
            on_call(req, completion)
        raw = completion.text
        value = parse_float(raw)
        if value is not None:
            return FloatResult(value, raw=raw, attempts=attempts)
    return FloatResult(0.0, fallback=True, raw=raw, attempts=attempts)


def provider_from_config(config: dict, *, base_dir: Optional[Path] = None) -> Provider:
    """Build a provider from a scenario/CLI config mapping.

    Recognized kinds: scripted (responses inline or script file), echo,
    record (wrapping an inner config), replay, remote.
    """
    kind = config.get("kind", "echo")
    defaults = GenDefaults(
        max_tokens=config.get("max_tokens", 256),
        temperature=config.get("temperature", 0.0),
        stop=tuple(config.get("stop", ())),
    )

    def resolve(path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return p

    if kind == "scripted":
        if "script" in config:
            return ScriptedProvider.from_file(resolve(config["script"]), defaults)
        return ScriptedProvider(config.get("responses", ()), defaults)
    if kind in ("echo", "echo_hash"):
        return EchoHashProvider(defaults)
    if kind == "record":
        inner = provider_from_config(config.get("inner", {"kind": "echo"}), base_dir=base_dir)
        if "cassette" not in config:
            raise ProviderError("record provider requires a cassette path")
        return RecordingProvider(inner, resolve(config["cassette"]))
    if kind == "replay":
        if "cassette" not in config:
            raise ProviderError("replay provider requires a cassette path")
        return ReplayProvider(resolve(config["cassette"]), defaults)
    if kind == "remote":
        return RemoteProvider(
            config.get("base_url") or os.environ.get("FABULA_LM_BASE_URL", ""),
            config.get("model") or os.environ.get("FABULA_LM_MODEL", ""),
            config.get("api_key") or os.environ.get("FABULA_LM_API_KEY"),
            defaults=defaults,
        )
    raise ProviderError(f"unknown provider kind {kind!r}")
