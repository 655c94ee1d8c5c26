"""Provider-agnostic chat-completion client.

Backends: `remote_http` and `local_http` POST the de-facto chat-completions
JSON shape; `replay` answers from a JSON Lines file keyed by a request
fingerprint; `scripted` answers from ordered pattern rules. The replay and
scripted backends make every pipeline and test run fully offline.

The fingerprint is sha256 over the UTF-8 bytes of model_id, system_text, and
user_text joined by a NUL byte, rendered as lowercase hex. It is stable
across platforms and documented in the README so replay files can be built
by other tools.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import (
    HttpStatusError,
    LlmError,
    LlmTimeoutError,
    MissingReplayEntryError,
    NoRuleMatchedError,
    ReplayIoError,
)

BACKENDS = ("remote_http", "local_http", "replay", "scripted")

DEFAULT_RESPONSE_PATH = "choices.0.message.content"


@dataclass(frozen=True)
class Prompt:
    system_text: str
    user_text: str


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_s: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass(frozen=True)
class ScriptedRule:
    """Answer `response` when every given condition matches the request."""

    response: str
    contains: str | None = None
    regex: str | None = None
    system_contains: str | None = None
    delay_s: float = 0.0

    def matches(self, request: ChatRequest) -> bool:
        if self.contains is not None and self.contains not in request.user_text:
            return False
        if self.regex is not None and re.search(self.regex, request.user_text) is None:
            return False
        if self.system_contains is not None \
                and self.system_contains not in request.system_text:
            return False
        return True


@dataclass(frozen=True)
class ProviderConfig:
    backend: str
    endpoint_url: str | None = None
    api_key_env: str | None = None
    timeout_s: float = 30.0
    response_path: str = DEFAULT_RESPONSE_PATH
    replay_path: Path | None = None
    record_path: Path | None = None
    rules: tuple[ScriptedRule, ...] = ()

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend in ("remote_http", "local_http") and not self.endpoint_url:
            raise ValueError(f"{self.backend} backend needs endpoint_url")
        if self.backend == "replay" and self.replay_path is None:
            raise ValueError("replay backend needs replay_path")


def fingerprint(model_id: str, system_text: str, user_text: str) -> str:
    payload = b"\x00".join(
        part.encode("utf-8") for part in (model_id, system_text, user_text))
    return hashlib.sha256(payload).hexdigest()


def request_fingerprint(request: ChatRequest) -> str:
    return fingerprint(request.model_id, request.system_text, request.user_text)


# --- replay files -------------------------------------------------------------

_replay_lock = threading.Lock()
_replay_cache: dict[tuple, dict[str, dict]] = {}


def _load_replay(path: Path) -> dict[str, dict]:
    path = Path(path)
    try:
        stat = path.stat()
    except OSError as exc:
        raise ReplayIoError(f"{path}: {exc}") from exc
    cache_key = (str(path), stat.st_mtime_ns, stat.st_size)
    with _replay_lock:
        cached = _replay_cache.get(cache_key)
    if cached is not None:
        return cached
    entries: dict[str, dict] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReplayIoError(f"{path}: line {line_no}: {exc}") from exc
                # Later entries win; re-recording a fingerprint overrides it.
                entries[entry["fingerprint"]] = entry
    except OSError as exc:
        raise ReplayIoError(f"{path}: {exc}") from exc
    with _replay_lock:
        _replay_cache[cache_key] = entries
    return entries


def record_replay(request: ChatRequest, response: ChatResponse,
                  replay_path: Path) -> None:
    """Append one replay entry for `request`/`response`."""
    entry = {
        "fingerprint": request_fingerprint(request),
        "model": request.model_id,
        "system": request.system_text,
        "user": request.user_text,
        "text": response.text,
        "latency_ms": round(response.latency_s * 1000.0, 3),
    }
    try:
        with _replay_lock:
            with open(replay_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise ReplayIoError(f"{replay_path}: {exc}") from exc


# --- backends ------------------------------------------------------------------

def _extract_by_path(document, response_path: str):
    node = document
    for part in response_path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError) as exc:
                raise LlmError(
                    f"response path {response_path!r} failed at {part!r}") from exc
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise LlmError(f"response path {response_path!r} failed at {part!r}")
    if not isinstance(node, str):
        raise LlmError(f"response path {response_path!r} did not yield text")
    return node


def _http_complete(request: ChatRequest, config: ProviderConfig) -> ChatResponse:
    payload = {
        "model": request.model_id,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
    started = time.perf_counter()
    attempts = 0
    while True:
        attempts += 1
        try:
            with httpx.Client(timeout=config.timeout_s) as client:
                http_response = client.post(config.endpoint_url, json=payload,
                                            headers=headers)
            break
        except httpx.TimeoutException as exc:
            if attempts >= 2:  # one retry on transport timeout, then give up
                raise LlmTimeoutError(
                    f"{config.endpoint_url}: timed out after {attempts} attempts"
                ) from exc
        except httpx.HTTPError as exc:
            raise LlmError(f"{config.endpoint_url}: {exc}") from exc
    if http_response.status_code // 100 != 2:
        raise HttpStatusError(http_response.status_code,
                              http_response.text[:200])
    try:
        document = http_response.json()
    except ValueError as exc:
        raise LlmError("endpoint returned non-JSON body") from exc
    text = _extract_by_path(document, config.response_path)
    latency = time.perf_counter() - started
    usage = document.get("usage", {}) if isinstance(document, dict) else {}
    return ChatResponse(
        text=text,
        latency_s=latency,
        prompt_tokens=usage.get("prompt_tokens"),
        completion_tokens=usage.get("completion_tokens"),
    )


def _replay_complete(request: ChatRequest, config: ProviderConfig) -> ChatResponse:
    entries = _load_replay(config.replay_path)
    key = request_fingerprint(request)
    if key not in entries:
        raise MissingReplayEntryError(key)
    entry = entries[key]
    return ChatResponse(text=entry["text"],
                        latency_s=float(entry.get("latency_ms", 0.0)) / 1000.0)


def _scripted_complete(request: ChatRequest, config: ProviderConfig) -> ChatResponse:
    started = time.perf_counter()
    for rule in config.rules:
        if rule.matches(request):
            if rule.delay_s > 0:
                time.sleep(rule.delay_s)
            return ChatResponse(text=rule.response,
                                latency_s=time.perf_counter() - started)
    raise NoRuleMatchedError(
        f"no scripted rule matched user text {request.user_text[:80]!r}")


def complete(request: ChatRequest, config: ProviderConfig) -> ChatResponse:
    """Run one exchange against the configured backend.

    When `record_path` is set the exchange is appended to that replay file,
    whatever the backend, so a live or scripted run can seed later replays.
    """
    if config.backend in ("remote_http", "local_http"):
        response = _http_complete(request, config)
    elif config.backend == "replay":
        response = _replay_complete(request, config)
    else:
        response = _scripted_complete(request, config)
    if config.record_path is not None:
        record_replay(request, response, config.record_path)
    return response


class LlmClient:
    """A provider config bound to one model id; safe for concurrent use."""

    def __init__(self, config: ProviderConfig, model_id: str) -> None:
        self.config = config
        self.model_id = model_id
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self._calls += 1
        return complete(request, self.config)

    def chat(self, system_text: str, user_text: str, temperature: float = 0.0,
             max_tokens: int = 1024) -> ChatResponse:
        request = ChatRequest(system_text=system_text, user_text=user_text,
                              model_id=self.model_id, temperature=temperature,
                              max_tokens=max_tokens)
        return self.complete(request)
