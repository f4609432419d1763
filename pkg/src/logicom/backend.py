"""Chat-completion backends: scripted (deterministic) and OpenAI-compatible HTTP."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence, Union

import httpx

logger = logging.getLogger(__name__)


class Speaker(str, Enum):
    SELF = "Self"
    OTHER = "Other"


class BackendKind(str, Enum):
    HTTP = "HttpProvider"
    SCRIPTED = "Scripted"


class TransportError(Exception):
    """Network or HTTP failure talking to a provider."""

    def __init__(self, message: str, *, retryable: bool = True) -> None:
        super().__init__(message)
        self.retryable = retryable


class ScriptExhausted(Exception):
    """A scripted backend was called more times than it has responses."""


class BackendFailure(Exception):
    """An agent could not obtain a usable completion (transport or script)."""


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    turns: tuple[tuple[Speaker, str], ...] = ()
    temperature: float | None = None
    max_output_tokens: int | None = None


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    refused: bool = False
    answered_by: str = ""
    attempts: int = 1


# A scripted entry is either a plain reply or a record with optional
# "refused" / "error" / "text" keys.
ScriptEntry = Union[str, dict]
Responder = Callable[[CompletionRequest, int], ScriptEntry]

DEFAULT_RESERVED_OUTPUT = 512


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    kind: BackendKind = BackendKind.SCRIPTED
    context_window_tokens: int = 8192
    max_output_tokens: int | None = None
    temperature: float | None = None
    # HttpProvider
    model: str | None = None
    endpoint: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0
    requests_per_minute: float | None = None
    # Scripted
    script: tuple[ScriptEntry, ...] = ()
    responder: Responder | None = field(default=None, compare=False)
    simulate: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.context_window_tokens <= 0:
            raise ValueError("context_window_tokens must be positive")
        if self.context_window_tokens <= self.reserved_output:
            raise ValueError(
                f"{self.backend_id}: context window {self.context_window_tokens} "
                f"must exceed the reserved output budget {self.reserved_output}"
            )

    @property
    def reserved_output(self) -> int:
        if self.max_output_tokens is not None:
            return self.max_output_tokens
        return min(DEFAULT_RESERVED_OUTPUT, self.context_window_tokens // 4)

    @classmethod
    def from_dict(cls, data: dict[str, Any], *, base_dir: Path | None = None) -> "BackendConfig":
        data = dict(data)
        kind = BackendKind(data.pop("kind", BackendKind.SCRIPTED.value))
        script = data.pop("script", ())
        script_file = data.pop("script_file", None)
        if script_file is not None:
            path = Path(script_file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            script = load_script(path)
        known = {f for f in cls.__dataclass_fields__} - {"kind", "script", "responder"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown backend config fields: {sorted(unknown)}")
        return cls(kind=kind, script=tuple(script), **data)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"backend_id": self.backend_id, "kind": self.kind.value}
        for name in ("context_window_tokens", "max_output_tokens", "temperature", "model",
                     "endpoint", "api_key_env", "simulate"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def load_script(path: str | Path) -> list[ScriptEntry]:
    """Read a JSONL script file; each line is a JSON string or a response record."""
    entries: list[ScriptEntry] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def approximate_tokens(text: str) -> int:
    # ~4 characters per token for English BPE vocabularies; typically within
    # +-25% of the provider count on prose.
    return math.ceil(len(text) / 4)


def request_tokens(request: CompletionRequest, counter: Callable[[str], int]) -> int:
    return counter(request.system_text) + sum(counter(text) for _, text in request.turns)


class Backend:
    """A live handle on one configured backend."""

    def __init__(self, config: BackendConfig) -> None:
        self.config = config
        self.tokens_used = 0
        self._usage_lock = threading.Lock()

    def record_usage(self, response: "CompletionResponse") -> None:
        with self._usage_lock:
            self.tokens_used += response.prompt_tokens + response.completion_tokens

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def count_tokens(self, text: str) -> int:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Replays a fixed script, then defers to an optional responder.

    Every request received is kept in ``requests`` so tests can inspect what
    an agent actually sent.
    """

    def __init__(self, config: BackendConfig, responder: Responder | None = None) -> None:
        super().__init__(config)
        self._script = list(config.script)
        self._responder = responder or config.responder
        self._cursor = 0
        self._lock = threading.Lock()
        self.requests: list[CompletionRequest] = []

    @property
    def calls(self) -> int:
        return self._cursor

    def count_tokens(self, text: str) -> int:
        return whitespace_tokens(text)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            index = self._cursor
            self._cursor += 1
            self.requests.append(request)
            if index < len(self._script):
                entry = self._script[index]
            elif self._responder is not None:
                entry = self._responder(request, index)
            else:
                raise ScriptExhausted(
                    f"{self.backend_id}: script has {len(self._script)} responses, call {index + 1} requested"
                )
        if isinstance(entry, str):
            entry = {"text": entry}
        if entry.get("error"):
            raise TransportError(f"{self.backend_id}: scripted {entry['error']}",
                                 retryable=entry.get("retryable", True))
        text = entry.get("text", "")
        return CompletionResponse(
            text=text,
            prompt_tokens=request_tokens(request, whitespace_tokens),
            completion_tokens=whitespace_tokens(text),
            refused=bool(entry.get("refused", False)),
            answered_by=self.backend_id,
        )


class RateLimiter:
    """Minimum-interval limiter shared by every handle on the same backend id."""

    _registry: dict[str, "RateLimiter"] = {}
    _registry_lock = threading.Lock()

    def __init__(self, per_minute: float) -> None:
        self.interval = 60.0 / per_minute
        self._next = 0.0
        self._lock = threading.Lock()

    @classmethod
    def shared(cls, backend_id: str, per_minute: float) -> "RateLimiter":
        with cls._registry_lock:
            limiter = cls._registry.get(backend_id)
            if limiter is None:
                limiter = cls._registry[backend_id] = cls(per_minute)
            return limiter

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            time.sleep(start - now)


class HttpBackend(Backend):
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None) -> None:
        super().__init__(config)
        if not config.endpoint or not config.model:
            raise ValueError(f"{config.backend_id}: HttpProvider needs endpoint and model")
        self._client = client or httpx.Client(timeout=config.timeout)
        self._limiter = (
            RateLimiter.shared(config.backend_id, config.requests_per_minute)
            if config.requests_per_minute
            else None
        )

    def count_tokens(self, text: str) -> int:
        return approximate_tokens(text)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if not key:
                raise TransportError(
                    f"environment variable {self.config.api_key_env} is not set", retryable=False
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def payload(self, request: CompletionRequest) -> dict[str, Any]:
        messages = [{"role": "system", "content": request.system_text}]
        for speaker, text in request.turns:
            role = "assistant" if speaker is Speaker.SELF else "user"
            messages.append({"role": role, "content": text})
        body: dict[str, Any] = {"model": self.config.model, "messages": messages}
        temperature = request.temperature if request.temperature is not None else self.config.temperature
        if temperature is not None:
            body["temperature"] = temperature
        max_tokens = request.max_output_tokens or self.config.max_output_tokens
        if max_tokens is not None:
            body["max_tokens"] = max_tokens
        return body

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self._limiter is not None:
            self._limiter.wait()
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, headers=self._headers(), json=self.payload(request))
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.backend_id}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.backend_id}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            # Some providers answer safety blocks with a 400 content-filter error.
            if _is_content_filter_error(resp):
                return CompletionResponse(text="", refused=True, answered_by=self.backend_id)
            raise TransportError(f"{self.backend_id}: HTTP {resp.status_code}: {resp.text[:200]}",
                                 retryable=False)
        try:
            data = resp.json()
            choice = data["choices"][0]
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportError(f"{self.backend_id}: malformed response body") from exc
        message = choice.get("message") or {}
        text = message.get("content") or ""
        usage = data.get("usage") or {}
        refused = (
            choice.get("finish_reason") == "content_filter"
            or bool(message.get("refusal"))
            or not text.strip()
        )
        return CompletionResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", request_tokens(request, approximate_tokens))),
            completion_tokens=int(usage.get("completion_tokens", approximate_tokens(text))),
            refused=refused,
            answered_by=self.backend_id,
        )


def _is_content_filter_error(resp: httpx.Response) -> bool:
    try:
        err = resp.json().get("error") or {}
    except ValueError:
        return False
    return err.get("code") == "content_filter" or "content_filter" in str(err.get("type", ""))


def open_backend(config: BackendConfig, *, salt: str = "", client: httpx.Client | None = None) -> Backend:
    """Create a fresh handle for ``config``.

    Scripted handles own their cursor, so each debate should open its own.
    ``salt`` feeds the simulated responders so different debates diverge.
    """
    if config.kind is BackendKind.HTTP:
        return HttpBackend(config, client=client)
    responder = config.responder
    if responder is None and config.simulate:
        from .simulate import make_responder

        responder = make_responder(config.simulate, seed=config.seed, salt=salt)
    return ScriptedBackend(config, responder=responder)


def complete(backend: Backend, request: CompletionRequest) -> CompletionResponse:
    return backend.complete(request)


def count_tokens(backend: Backend, text: str) -> int:
    return backend.count_tokens(text) if text else 0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: Sequence[float] = (1.0, 2.0, 4.0)
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt - 1, len(self.backoff) - 1)]


NO_WAIT = RetryPolicy(max_attempts=3, backoff=())


def _with_retries(backend: Backend, request: CompletionRequest, policy: RetryPolicy) -> CompletionResponse:
    for attempt in range(1, policy.max_attempts + 1):
        try:
            response = backend.complete(request)
        except TransportError as exc:
            if not exc.retryable or attempt == policy.max_attempts:
                raise
            logger.warning("%s attempt %d failed: %s", backend.backend_id, attempt, exc)
            wait = policy.delay(attempt)
            if wait:
                policy.sleep(wait)
            continue
        backend.record_usage(response)
        return replace(response, answered_by=backend.backend_id, attempts=attempt)
    raise AssertionError("unreachable")


def complete_with_policy(
    primary: Backend,
    fallback: Backend | None,
    request: CompletionRequest,
    policy: RetryPolicy = NO_WAIT,
) -> CompletionResponse:
    """Complete on ``primary`` with retries; on refusal ask ``fallback`` once.

    The fallback receives the same request under the same retry policy. If it
    also refuses, its refused response is returned.
    """
    response = _with_retries(primary, request, policy)
    if response.refused and fallback is not None:
        logger.info("%s refused, falling back to %s", primary.backend_id, fallback.backend_id)
        response = _with_retries(fallback, request, policy)
    return response
