"""Chat-completion client with token accounting and record/replay.

Money is Decimal end to end: per-project dollar figures carry six decimal
places and campaign totals must reproduce exactly, so no binary floats ever
touch a cost.  The replay store is content-addressed (a hash of model name,
serialized turns, and sampling parameters keys each entry), which makes
replays insensitive to store ordering and byte-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable

from .errors import ProviderError, ReplayMiss, TransportError

MAX_ATTEMPTS = 5
BACKOFF_BASE = 0.5  # seconds; doubles per retry, capped below
BACKOFF_CAP = 8.0

_MICRO = Decimal(1_000_000)


@dataclass(frozen=True)
class TokenUsage:
    cached_prompt: int = 0
    uncached_prompt: int = 0
    completion: int = 0

    def __post_init__(self):
        for name in ("cached_prompt", "uncached_prompt", "completion"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.cached_prompt + self.uncached_prompt + self.completion

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.cached_prompt + other.cached_prompt,
            self.uncached_prompt + other.uncached_prompt,
            self.completion + other.completion,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "cached_prompt": self.cached_prompt,
            "uncached_prompt": self.uncached_prompt,
            "completion": self.completion,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenUsage":
        return cls(
            int(data.get("cached_prompt", 0)),
            int(data.get("uncached_prompt", 0)),
            int(data.get("completion", 0)),
        )

    @classmethod
    def from_provider(cls, usage: dict) -> "TokenUsage":
        """Map an OpenAI-style usage object onto the three buckets."""
        prompt = int(usage.get("prompt_tokens", 0))
        completion = int(usage.get("completion_tokens", 0))
        details = usage.get("prompt_tokens_details") or {}
        cached = int(details.get("cached_tokens", 0) or 0)
        cached = min(cached, prompt)
        return cls(cached_prompt=cached, uncached_prompt=prompt - cached, completion=completion)


@dataclass(frozen=True)
class PriceTable:
    """Dollars per one million tokens, exact decimals."""

    cached_rate: Decimal
    uncached_rate: Decimal
    completion_rate: Decimal

    def __post_init__(self):
        for name in ("cached_rate", "uncached_rate", "completion_rate"):
            value = getattr(self, name)
            if not isinstance(value, Decimal):
                object.__setattr__(self, name, Decimal(str(value)))
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def estimate_cost(usage: TokenUsage, prices: PriceTable) -> Decimal:
    """Exact dollar cost of *usage* under *prices*."""
    return (
        usage.cached_prompt * prices.cached_rate
        + usage.uncached_prompt * prices.uncached_rate
        + usage.completion * prices.completion_rate
    ) / _MICRO


def request_key(model: str, turns: list[dict[str, str]], params: dict | None = None) -> str:
    """Content hash identifying one request in the replay store."""
    payload = json.dumps(
        {"model": model, "turns": turns, "params": params or {}},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayStore:
    """JSONL store of completed requests; concurrent reads, locked appends."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            for raw in self.path.read_text("utf-8").splitlines():
                if not raw.strip():
                    continue
                record = json.loads(raw)
                self._entries[record["key"]] = record

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, key: str) -> tuple[str, TokenUsage]:
        record = self._entries.get(key)
        if record is None:
            raise ReplayMiss(f"no stored response for key {key[:16]}...")
        return record["response_text"], TokenUsage.from_dict(record["usage"])

    def append(self, key: str, request: dict, response_text: str, usage: TokenUsage) -> None:
        record = {
            "key": key,
            "request": request,
            "response_text": response_text,
            "usage": usage.as_dict(),
        }
        with self._lock:
            self._entries[key] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Backend modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Live:
    endpoint: str
    model: str


@dataclass(frozen=True)
class Record:
    endpoint: str
    model: str
    store_path: Path


@dataclass(frozen=True)
class Replay:
    store_path: Path
    model: str = "replay"


BackendMode = Live | Record | Replay

# a transport turns (messages, model, params) into (text, usage);
# injectable so tests and scripted backends never touch the network
Transport = Callable[[list[dict[str, str]], str, dict], tuple[str, TokenUsage]]


class RateLimiter:
    """Token-bucket limiter; serializes bursts to a requests/minute budget."""

    def __init__(self, requests_per_minute: float):
        self.interval = 60.0 / requests_per_minute
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self.interval
        delay = slot - now
        if delay > 0:
            time.sleep(delay)


class HttpTransport:
    """POST /v1/chat/completions against an OpenAI-compatible endpoint."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def __call__(
        self, messages: list[dict[str, str]], model: str, params: dict
    ) -> tuple[str, TokenUsage]:
        import requests

        url = f"{self.endpoint}/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": model, "messages": messages, **params}
        try:
            response = requests.post(url, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code} from {url}")
        if response.status_code != 200:
            raise ProviderError(response.status_code, response.text)
        data = response.json()
        text = data["choices"][0]["message"]["content"] or ""
        usage = TokenUsage.from_provider(data.get("usage", {}))
        return text, usage


class ChatBackend:
    """complete() over one of the three modes, with retries and accounting."""

    def __init__(
        self,
        mode: BackendMode,
        api_key: str | None = None,
        params: dict | None = None,
        rate_limit_rpm: float | None = None,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.mode = mode
        self.params = dict(params or {})
        self.sleep = sleep
        self._limiter = RateLimiter(rate_limit_rpm) if rate_limit_rpm else None
        self._store: ReplayStore | None = None
        self._transport: Transport | None = None
        if isinstance(mode, Replay):
            self._store = ReplayStore(mode.store_path)
        else:
            self._transport = transport or HttpTransport(mode.endpoint, api_key=api_key)
            if isinstance(mode, Record):
                self._store = ReplayStore(mode.store_path)

    @property
    def model(self) -> str:
        return self.mode.model

    def complete(self, turns: list[dict[str, str]]) -> tuple[str, TokenUsage]:
        """One assistant completion for *turns*, per the backend mode."""
        if not turns:
            raise ValueError("turns must be non-empty")
        key = request_key(self.model, turns, self.params)
        if isinstance(self.mode, Replay):
            assert self._store is not None
            return self._store.lookup(key)
        text, usage = self._call_with_retries(turns)
        if isinstance(self.mode, Record):
            assert self._store is not None
            self._store.append(
                key,
                {"model": self.model, "turns": turns, "params": self.params},
                text,
                usage,
            )
        return text, usage

    def _call_with_retries(self, turns: list[dict[str, str]]) -> tuple[str, TokenUsage]:
        assert self._transport is not None
        last: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if self._limiter is not None:
                self._limiter.wait()
            try:
                return self._transport(turns, self.model, self.params)
            except TransportError as exc:
                last = exc
                if attempt + 1 < MAX_ATTEMPTS:
                    self.sleep(min(BACKOFF_CAP, BACKOFF_BASE * (2**attempt)))
        raise TransportError(f"gave up after {MAX_ATTEMPTS} attempts: {last}")


def complete(turns: list[dict[str, str]], mode: BackendMode, **kwargs) -> tuple[str, TokenUsage]:
    """One-shot convenience wrapper around ChatBackend."""
    return ChatBackend(mode, **kwargs).complete(turns)


def api_key_from_env(var: str = "OPENAI_API_KEY") -> str | None:
    return os.environ.get(var)
