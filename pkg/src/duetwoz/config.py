"""Run configuration: provider routing, concurrency, retries, cache, seed.

Loaded from a JSON file (``--config``); CLI flags win over file values.
Unknown keys are rejected for typo safety.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError

# Model-prefix routing table; longest matching prefix wins, "" is the fallback.
DEFAULT_ROUTING = {
    "gpt-": "openai",
    "claude-": "anthropic",
    "gemini-": "gemini",
    "mock": "mock",
    "": "local",
}

DEFAULT_BASE_URLS = {
    "openai": "https://api.openai.com/v1",
    "anthropic": "https://api.anthropic.com",
    "gemini": "https://generativelanguage.googleapis.com",
    "local": "http://localhost:8000/v1",
}


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    backoff_base_s: float = 0.5
    backoff_cap_s: float = 30.0

    def delay(self, attempt: int) -> float:
        """Backoff before retrying after the given 1-based failed attempt."""
        return min(self.backoff_base_s * (2 ** (attempt - 1)), self.backoff_cap_s)


@dataclass(frozen=True)
class RunConfig:
    routing: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ROUTING))
    base_urls: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_BASE_URLS))
    concurrency: int = 4
    workers: int = 1
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    request_timeout_s: float = 60.0
    cache_dir: Optional[str] = None
    prompt_version: Optional[str] = None
    seed: int = 0
    temperature: Optional[float] = None
    top_p: Optional[float] = None

    def route(self, model: str) -> str:
        """Provider name for a model id (longest prefix match)."""
        best = ""
        for prefix in self.routing:
            if model.startswith(prefix) and len(prefix) >= len(best):
                best = prefix
        if best in self.routing:
            return self.routing[best]
        raise ConfigError(f"no provider route for model {model!r}")

    def with_overrides(self, **overrides) -> "RunConfig":
        supplied = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **supplied) if supplied else self


def load_config(path: Path | str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(payload)
    if "retry" in kwargs:
        retry_payload = kwargs["retry"]
        retry_known = {f.name for f in fields(RetryPolicy)}
        retry_unknown = set(retry_payload) - retry_known
        if retry_unknown:
            raise ConfigError(f"unknown retry keys: {sorted(retry_unknown)}")
        kwargs["retry"] = RetryPolicy(**retry_payload)
    if "routing" in kwargs:
        kwargs["routing"] = {**DEFAULT_ROUTING, **kwargs["routing"]}
    if "base_urls" in kwargs:
        kwargs["base_urls"] = {**DEFAULT_BASE_URLS, **kwargs["base_urls"]}
    return RunConfig(**kwargs)
