"""Chat-completion client with disk caching, retries, and usage accounting.

One gateway wraps one endpoint speaking the OpenAI-compatible JSON schema
(a messages array with a single user message). Every successful call is
written to an on-disk cache keyed by a digest of the request, so re-runs
replay responses byte-for-byte at zero marginal cost.
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
from typing import Callable, Protocol

import requests

from .errors import AuthError, ProviderError, TransportError

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class PriceTable:
    """USD per token, prompt and completion sides."""

    prompt_rate: float = 0.0
    completion_rate: float = 0.0

    def __post_init__(self):
        if self.prompt_rate < 0 or self.completion_rate < 0:
            raise ValueError("price rates must be >= 0")


@dataclass(frozen=True)
class LLMEndpoint:
    """An opaque chat-completion endpoint: the model behind it is never inspected."""

    name: str
    base_url: str
    model_id: str
    api_key_env: str | None = None
    price: PriceTable = field(default_factory=PriceTable)

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")

    @property
    def chat_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"


@dataclass(frozen=True)
class ChatRequest:
    endpoint: LLMEndpoint
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class UsageStats:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost_usd: float = 0.0
    latency_ms: float = 0.0
    approximate: bool = False

    def __add__(self, other: "UsageStats") -> "UsageStats":
        return UsageStats(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
            cost_usd=self.cost_usd + other.cost_usd,
            latency_ms=self.latency_ms + other.latency_ms,
            approximate=self.approximate or other.approximate,
        )

    @classmethod
    def zero(cls) -> "UsageStats":
        return cls()

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost_usd": self.cost_usd,
            "latency_ms": self.latency_ms,
            "approximate": self.approximate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UsageStats":
        return cls(
            prompt_tokens=int(d["prompt_tokens"]),
            completion_tokens=int(d["completion_tokens"]),
            cost_usd=float(d["cost_usd"]),
            latency_ms=float(d["latency_ms"]),
            approximate=bool(d.get("approximate", False)),
        )


def sum_usage(items) -> UsageStats:
    total = UsageStats.zero()
    for u in items:
        total = total + u
    return total


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: UsageStats
    cached: bool = False


def estimate_cost(prompt_tokens: int, completion_tokens: int, price: PriceTable) -> float:
    """USD cost of a call at the given per-token rates."""
    return prompt_tokens * price.prompt_rate + completion_tokens * price.completion_rate


def approx_token_count(text: str) -> int:
    """Whitespace+punctuation token approximation, used when the provider omits usage.

    A token is a maximal run of word characters, or a single non-space
    non-word character. Crude but deterministic and documented.
    """
    return len(_TOKEN_RE.findall(text))


def canonical_request(request: ChatRequest) -> str:
    """Stable serialization of the fields that identify a request."""
    return json.dumps(
        {
            "max_tokens": request.max_tokens,
            "model": request.endpoint.model_id,
            "prompt": request.prompt,
            "stop": list(request.stop),
            "temperature": request.temperature,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
    )


def cache_key(request: ChatRequest) -> str:
    """Collision-resistant digest of the canonical request serialization."""
    return hashlib.sha256(canonical_request(request).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_s: float = 1.0
    multiplier: float = 2.0

    def delay(self, attempt: int) -> float:
        """Sleep before retry number `attempt` (1-based)."""
        return self.backoff_s * self.multiplier ** (attempt - 1)


class Transport(Protocol):
    """Seam between the gateway and the wire; lets tests script endpoints."""

    def post(self, url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, object]:
        """Return (status_code, parsed JSON body or raw text)."""
        ...


class RequestsTransport:
    def post(self, url, headers, payload, timeout):
        try:
            resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return resp.status_code, body


class ResponseCache:
    """Append-only on-disk store: one directory per endpoint, one file per key.

    Writes are atomic per key (tmp file + rename), so concurrent appenders
    are safe; a key is never overwritten with different content because the
    key pins the request and responses are deterministic per cache policy.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, endpoint_name: str, key: str) -> Path:
        return self.root / endpoint_name / f"{key}.json"

    def get(self, endpoint_name: str, key: str) -> dict | None:
        path = self._path(endpoint_name, key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None

    def put(self, endpoint_name: str, key: str, record: dict) -> None:
        path = self._path(endpoint_name, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps(record, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


@dataclass(frozen=True)
class LedgerEntry:
    endpoint: str
    model_id: str
    cached: bool
    usage: UsageStats
    marginal_cost_usd: float
    wall_latency_ms: float


class UsageLedger:
    """Thread-safe record of every gateway call, cached or live.

    Transcripts carry the replayed canonical usage; this ledger is the
    source of truth for what a run actually spent (marginal cost is zero
    for cache hits).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[LedgerEntry] = []

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def marginal_cost_usd(self) -> float:
        return sum(e.marginal_cost_usd for e in self.entries)

    def call_count(self, cached: bool | None = None) -> int:
        return sum(
            1 for e in self.entries if cached is None or e.cached == cached
        )


class LLMGateway:
    """Uniform client for one chat-completion endpoint.

    Cache hits replay the original call's measured usage so downstream
    transcripts stay byte-identical across re-runs; the ledger separately
    records that the hit cost nothing new.
    """

    def __init__(
        self,
        endpoint: LLMEndpoint,
        cache: ResponseCache | None = None,
        ledger: UsageLedger | None = None,
        transport: Transport | None = None,
        retry: RetryPolicy = RetryPolicy(),
        max_parallel: int = 4,
        timeout_s: float = 60.0,
        charge_cached: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.cache = cache
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.transport = transport if transport is not None else RequestsTransport()
        self.retry = retry
        self.timeout_s = timeout_s
        self.charge_cached = charge_cached
        self._sleep = sleep
        self._sem = threading.Semaphore(max_parallel)

    def complete(self, request: ChatRequest) -> ChatResponse:
        if not request.prompt.strip():
            raise ValueError("prompt must be non-empty")

        key = cache_key(request)
        if self.cache is not None:
            t0 = time.perf_counter()
            record = self.cache.get(self.endpoint.name, key)
            lookup_ms = (time.perf_counter() - t0) * 1000.0
            if record is not None:
                usage = UsageStats.from_dict(record["usage"])
                marginal = usage.cost_usd if self.charge_cached else 0.0
                self.ledger.record(
                    LedgerEntry(
                        endpoint=self.endpoint.name,
                        model_id=self.endpoint.model_id,
                        cached=True,
                        usage=usage,
                        marginal_cost_usd=marginal,
                        wall_latency_ms=lookup_ms,
                    )
                )
                return ChatResponse(text=record["text"], usage=usage, cached=True)

        text, usage = self._call(request)
        if self.cache is not None:
            self.cache.put(
                self.endpoint.name,
                key,
                {"text": text, "usage": usage.to_dict()},
            )
        self.ledger.record(
            LedgerEntry(
                endpoint=self.endpoint.name,
                model_id=self.endpoint.model_id,
                cached=False,
                usage=usage,
                marginal_cost_usd=usage.cost_usd,
                wall_latency_ms=usage.latency_ms,
            )
        )
        return ChatResponse(text=text, usage=usage, cached=False)

    # -- wire ------------------------------------------------------------

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key_env:
            key = os.environ.get(self.endpoint.api_key_env, "")
            if not key:
                raise AuthError(
                    f"API key variable {self.endpoint.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, request: ChatRequest) -> dict:
        payload = {
            "model": self.endpoint.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        return payload

    def _call(self, request: ChatRequest) -> tuple[str, UsageStats]:
        headers = self._headers()
        payload = self._payload(request)
        url = self.endpoint.chat_url
        last_exc: Exception | None = None
        status, body = None, None
        for attempt in range(1, self.retry.attempts + 1):
            t0 = time.perf_counter()
            try:
                with self._sem:
                    status, body = self.transport.post(
                        url, headers, payload, self.timeout_s
                    )
            except TransportError as exc:
                last_exc = exc
                log.warning("attempt %d/%d: %s", attempt, self.retry.attempts, exc)
                if attempt < self.retry.attempts:
                    self._sleep(self.retry.delay(attempt))
                continue
            latency_ms = (time.perf_counter() - t0) * 1000.0
            if status == 200:
                return self._parse_body(request, body, latency_ms)
            if status in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {status}): {body}")
            if status in RETRYABLE_STATUSES and attempt < self.retry.attempts:
                log.warning("attempt %d/%d: HTTP %s", attempt, self.retry.attempts, status)
                self._sleep(self.retry.delay(attempt))
                continue
            raise ProviderError(f"provider returned HTTP {status}", status=status, body=body)
        if last_exc is not None:
            raise TransportError(
                f"giving up after {self.retry.attempts} attempts: {last_exc}"
            ) from last_exc
        raise ProviderError(f"provider returned HTTP {status}", status=status, body=body)

    def _parse_body(self, request: ChatRequest, body, latency_ms: float):
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion body: {body!r}", body=body) from exc
        if text is None:
            text = ""
        reported = body.get("usage") if isinstance(body, dict) else None
        if isinstance(reported, dict) and "prompt_tokens" in reported:
            prompt_tokens = int(reported.get("prompt_tokens", 0))
            completion_tokens = int(reported.get("completion_tokens", 0))
            approximate = False
        else:
            prompt_tokens = approx_token_count(request.prompt)
            completion_tokens = approx_token_count(text)
            approximate = True
        usage = UsageStats(
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost_usd=estimate_cost(prompt_tokens, completion_tokens, self.endpoint.price),
            latency_ms=latency_ms,
            approximate=approximate,
        )
        return text, usage
