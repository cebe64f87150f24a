"""Uniform chat-completion interface over hosted providers plus a scripted mock.

Adds a content-addressed on-disk response cache, bounded per-provider
concurrency, and retry with exponential backoff. ``Gateway.complete`` is a
blocking call, safe to invoke from many worker threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import httpx

from .config import RunConfig
from .errors import AuthError, ConfigError, MockUnmatched, ProviderError, RateLimitExhausted

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"bad message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """A chat completion request; absent sampling fields mean provider defaults.

    ``cache_salt`` participates in the cache key only, letting callers force
    distinct cache entries for deliberate re-asks (e.g. regeneration attempts).
    """

    model: str
    messages: tuple[ChatMessage, ...]
    temperature: Optional[float] = None
    top_p: Optional[float] = None
    cache_salt: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role == "assistant":
            raise ValueError("first message role must be system or user")

    def text(self) -> str:
        return "\n".join(message.content for message in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    from_cache: bool
    latency_ms: float
    provider_meta: dict


def cache_digest(request: ChatRequest, prompt_version: str) -> str:
    """Content hash identifying a request under a given prompt version."""
    payload = {
        "model": request.model,
        "messages": [[m.role, m.content] for m in request.messages],
        "sampling": {"temperature": request.temperature, "top_p": request.top_p},
        "prompt_version": prompt_version,
        "salt": request.cache_salt,
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON envelope file per digest; writes are serialized and atomic."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> Optional[dict]:
        path = self._path(digest)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    def put(self, digest: str, envelope: dict) -> None:
        path = self._path(digest)
        with self._write_lock:
            tmp_path = path.with_name(path.name + ".tmp")
            tmp_path.write_text(
                json.dumps(envelope, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
                encoding="utf-8",
            )
            os.replace(tmp_path, path)


class _Transient(Exception):
    """Internal marker for retryable failures (429/5xx/timeouts)."""

    def __init__(self, detail: str, timed_out: bool = False):
        super().__init__(detail)
        self.timed_out = timed_out


# --- mock provider scripting ---

@dataclass
class MockRule:
    """Ordered rule: a pattern plus one reply or a per-match reply sequence.

    Patterns are literal substrings, or anchored regexes when they start with
    '^' or end with '$'. A multi-reply rule advances one reply per match and
    sticks at the last one once exhausted.
    """

    pattern: str
    replies: tuple[str, ...]
    _cursor: int = field(default=0, repr=False)

    def matches(self, text: str) -> bool:
        if self.pattern.startswith("^") or self.pattern.endswith("$"):
            return re.search(self.pattern, text, flags=re.MULTILINE) is not None
        return self.pattern in text

    def next_reply(self) -> str:
        reply = self.replies[min(self._cursor, len(self.replies) - 1)]
        self._cursor += 1
        return reply


@dataclass
class MockScript:
    rules: list[MockRule] = field(default_factory=list)
    default: Optional[str] = None
    strict: bool = True

    @classmethod
    def from_rules(cls, rules: list[tuple[str, object]], default: Optional[str] = None,
                   strict: bool = True) -> "MockScript":
        built = []
        for pattern, reply in rules:
            replies = tuple(reply) if isinstance(reply, (list, tuple)) else (str(reply),)
            built.append(MockRule(pattern=pattern, replies=replies))
        return cls(rules=built, default=default, strict=strict)

    @classmethod
    def from_file(cls, path: Path | str) -> "MockScript":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        rules = []
        for rule in payload.get("rules", []):
            replies = rule.get("replies")
            if replies is None:
                replies = [rule["reply"]]
            rules.append(MockRule(pattern=rule["pattern"], replies=tuple(str(r) for r in replies)))
        return cls(rules=rules, default=payload.get("default"), strict=payload.get("strict", True))


class MockProvider:
    """Deterministic offline provider driven by an ordered rule script."""

    name = "mock"

    def __init__(self, script: Optional[MockScript] = None):
        self.script = script or MockScript()
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> tuple[str, dict]:
        text = request.text()
        with self._lock:
            for rule in self.script.rules:
                if rule.matches(text):
                    return rule.next_reply(), {"rule": rule.pattern}
            if self.script.default is not None:
                return self.script.default, {"rule": None}
        if self.script.strict:
            raise MockUnmatched(f"no mock rule matches request (first 120 chars: {text[:120]!r})")
        return "", {"rule": None}


# --- HTTP provider adapters ---

class HttpProvider:
    """Shared plumbing: credentials, error classification, one httpx client."""

    name = "http"
    key_env: Optional[str] = None
    key_required = True

    def __init__(self, base_url: str, timeout_s: float, transport: Optional[httpx.BaseTransport] = None):
        self.base_url = base_url.rstrip("/")
        self.client = httpx.Client(timeout=timeout_s, transport=transport)

    def api_key(self) -> Optional[str]:
        if not self.key_env:
            return None
        key = os.environ.get(self.key_env)
        if not key and self.key_required:
            raise AuthError(f"set {self.key_env} to use the {self.name} provider")
        return key

    def _post(self, url: str, headers: dict, body: dict) -> dict:
        try:
            response = self.client.post(url, headers=headers, json=body)
        except httpx.TimeoutException as exc:
            raise _Transient(f"timeout: {exc}", timed_out=True) from exc
        except httpx.TransportError as exc:
            raise _Transient(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"{self.name} rejected credentials (HTTP {response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise _Transient(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code >= 400:
            raise ProviderError(
                f"{self.name} returned HTTP {response.status_code}",
                status_code=response.status_code,
                body_excerpt=response.text[:500],
            )
        return response.json()


class OpenAIStyleProvider(HttpProvider):
    name = "openai"
    key_env = "OPENAI_API_KEY"

    def send(self, request: ChatRequest) -> tuple[str, dict]:
        key = self.api_key()
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        body: dict = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        }
        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.top_p is not None:
            body["top_p"] = request.top_p
        payload = self._post(f"{self.base_url}/chat/completions", headers, body)
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{self.name} response missing message content: {exc}") from exc
        return content, {"usage": payload.get("usage"), "model": payload.get("model")}


class LocalHttpProvider(OpenAIStyleProvider):
    """OpenAI-compatible local server (llama.cpp, vLLM, ...); auth optional."""

    name = "local"
    key_env = "LOCAL_API_KEY"
    key_required = False


class AnthropicStyleProvider(HttpProvider):
    name = "anthropic"
    key_env = "ANTHROPIC_API_KEY"

    def send(self, request: ChatRequest) -> tuple[str, dict]:
        headers = {"x-api-key": self.api_key() or "", "anthropic-version": "2023-06-01"}
        system = "\n\n".join(m.content for m in request.messages if m.role == "system")
        body: dict = {
            "model": request.model,
            "max_tokens": 4096,
            "messages": [
                {"role": m.role, "content": m.content}
                for m in request.messages
                if m.role != "system"
            ],
        }
        if system:
            body["system"] = system
        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.top_p is not None:
            body["top_p"] = request.top_p
        payload = self._post(f"{self.base_url}/v1/messages", headers, body)
        blocks = payload.get("content") or []
        content = "".join(block.get("text", "") for block in blocks if block.get("type") == "text")
        return content, {"usage": payload.get("usage"), "stop_reason": payload.get("stop_reason")}


class GeminiStyleProvider(HttpProvider):
    name = "gemini"
    key_env = "GEMINI_API_KEY"

    def send(self, request: ChatRequest) -> tuple[str, dict]:
        headers = {"x-goog-api-key": self.api_key() or ""}
        contents = []
        system_parts = []
        for message in request.messages:
            if message.role == "system":
                system_parts.append({"text": message.content})
                continue
            role = "model" if message.role == "assistant" else "user"
            contents.append({"role": role, "parts": [{"text": message.content}]})
        body: dict = {"contents": contents}
        if system_parts:
            body["systemInstruction"] = {"parts": system_parts}
        generation: dict = {}
        if request.temperature is not None:
            generation["temperature"] = request.temperature
        if request.top_p is not None:
            generation["topP"] = request.top_p
        if generation:
            body["generationConfig"] = generation
        url = f"{self.base_url}/v1beta/models/{request.model}:generateContent"
        payload = self._post(url, headers, body)
        try:
            parts = payload["candidates"][0]["content"]["parts"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{self.name} response missing candidates: {exc}") from exc
        content = "".join(part.get("text", "") for part in parts)
        return content, {"usageMetadata": payload.get("usageMetadata")}


_PROVIDER_TYPES = {
    "openai": OpenAIStyleProvider,
    "anthropic": AnthropicStyleProvider,
    "gemini": GeminiStyleProvider,
    "local": LocalHttpProvider,
}


@dataclass
class ProviderStats:
    requests: int = 0
    in_flight: int = 0
    high_water: int = 0


class Gateway:
    """Routes requests to provider adapters with caching, retries, and admission control."""

    def __init__(
        self,
        config: Optional[RunConfig] = None,
        *,
        prompt_version: str = "0",
        cache_dir: Optional[Path | str] = None,
        mock_script: Optional[MockScript] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config or RunConfig()
        self.prompt_version = prompt_version
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self._transport = transport
        self._sleep = sleep
        self._mock = MockProvider(mock_script)
        self._force_mock = mock_script is not None
        self._providers: dict[str, object] = {"mock": self._mock}
        self._gates: dict[str, threading.Semaphore] = {}
        self._stats: dict[str, ProviderStats] = {}
        self._lock = threading.Lock()

    # observability for tests and manifests
    @property
    def stats(self) -> dict[str, ProviderStats]:
        return self._stats

    @property
    def request_count(self) -> int:
        return sum(s.requests for s in self._stats.values())

    def register_mock_script(self, script: MockScript) -> None:
        """Install a mock script and route all subsequent requests to the mock."""
        self._mock.script = script
        self._force_mock = True

    def _provider_for(self, model: str):
        name = "mock" if self._force_mock else self.config.route(model)
        with self._lock:
            provider = self._providers.get(name)
            if provider is None:
                provider_type = _PROVIDER_TYPES.get(name)
                if provider_type is None:
                    raise ConfigError(f"unknown provider {name!r} in routing table")
                provider = provider_type(
                    base_url=self.config.base_urls.get(name, ""),
                    timeout_s=self.config.request_timeout_s,
                    transport=self._transport,
                )
                self._providers[name] = provider
            if name not in self._gates:
                self._gates[name] = threading.Semaphore(self.config.concurrency)
                self._stats[name] = ProviderStats()
        return name, provider

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Complete a chat request, consulting the cache first.

        Transient failures (HTTP 429/5xx, timeouts) are retried with
        exponential, non-decreasing backoff up to the configured attempt
        limit; what remains is raised as RateLimitExhausted (or TimeoutError
        when the final failure was a timeout).
        """
        digest = cache_digest(request, self.prompt_version)
        if self.cache is not None:
            envelope = self.cache.get(digest)
            if envelope is not None:
                return ChatResponse(
                    content=envelope["content"],
                    from_cache=True,
                    latency_ms=0.0,
                    provider_meta=envelope.get("provider_meta", {}),
                )
        name, provider = self._provider_for(request.model)
        gate = self._gates[name]
        stats = self._stats[name]
        with gate:
            with self._lock:
                stats.in_flight += 1
                stats.high_water = max(stats.high_water, stats.in_flight)
            try:
                content, meta, latency_ms = self._send_with_retry(name, provider, request)
            finally:
                with self._lock:
                    stats.in_flight -= 1
        if self.cache is not None:
            self.cache.put(digest, {
                "request": {
                    "model": request.model,
                    "messages": [[m.role, m.content] for m in request.messages],
                    "temperature": request.temperature,
                    "top_p": request.top_p,
                    "salt": request.cache_salt,
                    "prompt_version": self.prompt_version,
                },
                "content": content,
                "provider_meta": meta,
                "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            })
        return ChatResponse(content=content, from_cache=False, latency_ms=latency_ms, provider_meta=meta)

    def _send_with_retry(self, name: str, provider, request: ChatRequest) -> tuple[str, dict, float]:
        policy = self.config.retry
        last: Optional[_Transient] = None
        for attempt in range(1, policy.max_attempts + 1):
            with self._lock:
                self._stats[name].requests += 1
            started = time.perf_counter()
            try:
                content, meta = provider.send(request)
                return content, meta, (time.perf_counter() - started) * 1000.0
            except _Transient as failure:
                last = failure
                if attempt == policy.max_attempts:
                    break
                delay = policy.delay(attempt)
                logger.warning("%s attempt %d/%d failed (%s); retrying in %.2fs",
                               name, attempt, policy.max_attempts, failure, delay)
                self._sleep(delay)
        assert last is not None
        if last.timed_out:
            raise TimeoutError(f"{name}: {last}")
        raise RateLimitExhausted(f"{name}: giving up after {policy.max_attempts} attempts: {last}")
