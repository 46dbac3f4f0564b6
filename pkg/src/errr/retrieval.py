"""Retriever backends: web-search snippets and a local dense L2 index.

Both backends expose ``search(query, k) -> list[Passage]`` so pipelines can
treat them interchangeably. Multi-query retrieval merges per-query results
by round-robin interleave, de-duplicates by passage id, and truncates to
the total budget.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .errors import (
    AuthError,
    DimensionMismatch,
    EmptyIndex,
    EmptyResult,
    IntegrityError,
    TransportError,
)


@dataclass(frozen=True)
class Passage:
    """One retrieved text unit."""

    id: str
    title: str | None
    text: str
    score: float
    source: str  # "web" or "dense"

    def __post_init__(self):
        if not self.text:
            raise ValueError("passage text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "text": self.text,
            "score": self.score,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Passage":
        return cls(
            id=d["id"],
            title=d.get("title"),
            text=d["text"],
            score=float(d["score"]),
            source=d["source"],
        )


class Retriever(Protocol):
    def search(self, query: str, k: int) -> list[Passage]: ...


# --- dense index -------------------------------------------------------------


@dataclass
class DenseIndex:
    """Immutable brute-force L2 index; row i of `vectors` belongs to passages[i]."""

    dim: int
    vectors: np.ndarray
    passages: list[dict]  # {"id", "title", "text"} aligned by row

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise DimensionMismatch(
                f"vector matrix must be N x {self.dim}, got shape {self.vectors.shape}"
            )
        if len(self.passages) != self.vectors.shape[0]:
            raise ValueError("vectors and passages must have equal length")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]


def l2_distance(x: Sequence[float], y: Sequence[float]) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def dense_top_k(index: DenseIndex, query_vec: Sequence[float], k: int) -> list[Passage]:
    """The k nearest rows by L2 distance, ties broken by ascending row id."""
    if index.n == 0:
        raise EmptyIndex("index holds no passages")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise DimensionMismatch(
            f"query vector has length {q.shape[0] if q.ndim == 1 else q.shape}, "
            f"index dim is {index.dim}"
        )
    if not 1 <= k <= index.n:
        raise ValueError(f"k must be in [1, {index.n}], got {k}")
    # stable argsort keeps input (row) order on exact distance ties
    d2 = np.sum((index.vectors - q) ** 2, axis=1)
    rows = np.argsort(d2, kind="stable")[:k]
    return [
        Passage(
            id=index.passages[i]["id"],
            title=index.passages[i].get("title"),
            text=index.passages[i]["text"],
            score=-math.sqrt(float(d2[i])),
            source="dense",
        )
        for i in map(int, rows)
    ]


def ingest_corpus(
    records: Iterable[tuple[str, str | None, str, Sequence[float]]],
    dim: int | None = None,
) -> DenseIndex:
    """Build an index from (id, title, text, vector) records, input order kept.

    The first record fixes the dimensionality unless `dim` is given;
    ingestion aborts on the first inconsistent record, naming it.
    """
    vectors: list[np.ndarray] = []
    passages: list[dict] = []
    for rec_id, title, text, vec in records:
        v = np.asarray(vec, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatch(f"record {rec_id!r}: embedding must be a flat vector")
        if dim is None:
            dim = int(v.shape[0])
        if v.shape[0] != dim:
            raise DimensionMismatch(
                f"record {rec_id!r}: embedding has length {v.shape[0]}, expected {dim}"
            )
        vectors.append(v)
        passages.append({"id": rec_id, "title": title, "text": text})
    if dim is None:
        dim = 0
    stacked = np.vstack(vectors) if vectors else np.empty((0, dim), dtype=np.float64)
    return DenseIndex(dim=dim, vectors=stacked, passages=passages)


def read_corpus_file(path: str | Path):
    """Yield (id, title, text, embedding) from a line-delimited corpus file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield obj["id"], obj.get("title"), obj["text"], obj["embedding"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EmptyResult(f"corpus line {lineno}: bad record ({exc})") from exc


# --- index persistence ----------------------------------------------------------

_MANIFEST = "manifest.json"
_VECTORS = "vectors.npy"
_PASSAGES = "passages.jsonl"


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_index(index: DenseIndex, out_dir: str | Path) -> dict:
    """Persist the index plus a manifest (n, dim, checksums); returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / _VECTORS, index.vectors)
    with open(out / _PASSAGES, "w", encoding="utf-8") as fh:
        for p in index.passages:
            fh.write(json.dumps(p, ensure_ascii=False) + "\n")
    manifest = {
        "n": index.n,
        "dim": index.dim,
        "vectors_sha256": _sha256_file(out / _VECTORS),
        "passages_sha256": _sha256_file(out / _PASSAGES),
    }
    (out / _MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_index(in_dir: str | Path) -> DenseIndex:
    """Load a persisted index, verifying the manifest checksums."""
    src = Path(in_dir)
    manifest = json.loads((src / _MANIFEST).read_text(encoding="utf-8"))
    for fname, key in ((_VECTORS, "vectors_sha256"), (_PASSAGES, "passages_sha256")):
        actual = _sha256_file(src / fname)
        if actual != manifest[key]:
            raise IntegrityError(
                f"{fname} checksum {actual[:12]}... does not match manifest"
            )
    vectors = np.load(src / _VECTORS)
    passages = [
        json.loads(line)
        for line in (src / _PASSAGES).read_text(encoding="utf-8").splitlines()
        if line
    ]
    return DenseIndex(dim=int(manifest["dim"]), vectors=vectors, passages=passages)


# --- embedding client --------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    base_url: str
    model_id: str
    dim: int = 768


class EmbeddingClient:
    """Delegates query encoding to an external embedding endpoint."""

    def __init__(self, config: EmbeddingProviderConfig, session: requests.Session | None = None,
                 timeout_s: float = 30.0):
        self.config = config
        self.session = session or requests.Session()
        self.timeout_s = timeout_s

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("text must be non-empty")
        url = self.config.base_url.rstrip("/") + "/embeddings"
        try:
            resp = self.session.post(
                url,
                json={"model": self.config.model_id, "input": text},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"embedding endpoint returned HTTP {resp.status_code}")
        vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        if vec.shape != (self.config.dim,):
            raise DimensionMismatch(
                f"provider returned length {vec.shape[0]}, expected {self.config.dim}"
            )
        return vec


class DenseRetriever:
    def __init__(self, index: DenseIndex, embedder: EmbeddingClient):
        if index.dim != embedder.config.dim:
            raise DimensionMismatch(
                f"index dim {index.dim} != embedding provider dim {embedder.config.dim}"
            )
        self.index = index
        self.embedder = embedder

    def search(self, query: str, k: int) -> list[Passage]:
        vec = self.embedder.embed(query)
        return dense_top_k(self.index, vec, min(k, self.index.n))


# --- web search --------------------------------------------------------------------


@dataclass(frozen=True)
class WebSearchConfig:
    base_url: str
    api_key_env: str | None = None
    result_count: int = 5

    def __post_init__(self):
        if self.result_count < 1:
            raise ValueError("result_count must be >= 1")


class WebSearchClient:
    """Engine-rank-ordered snippets via a Brave-style GET API."""

    def __init__(self, config: WebSearchConfig, session: requests.Session | None = None,
                 timeout_s: float = 30.0):
        self.config = config
        self.session = session or requests.Session()
        self.timeout_s = timeout_s

    def search(self, query: str, k: int | None = None) -> list[Passage]:
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        k = self.config.result_count if k is None else k
        headers = {"Accept": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if not key:
                raise AuthError(f"API key variable {self.config.api_key_env!r} is not set")
            headers["X-Subscription-Token"] = key
        try:
            resp = self.session.get(
                self.config.base_url,
                params={"q": query, "count": k},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"GET {self.config.base_url} failed: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"search engine rejected credentials (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise TransportError(f"search engine returned HTTP {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise EmptyResult(f"non-JSON search response: {resp.text[:200]!r}") from exc
        return parse_search_results(body, k)


def parse_search_results(body: object, k: int) -> list[Passage]:
    """Extract up to k passages from an engine response, rank order kept.

    Accepts both the nested {"web": {"results": [...]}} layout and a flat
    {"results": [...]} array; hit fields are url, title, description (or
    snippet). Zero hits is a valid empty result; a missing results array
    is a malformed response.
    """
    results = None
    if isinstance(body, dict):
        if isinstance(body.get("web"), dict):
            results = body["web"].get("results")
        if results is None:
            results = body.get("results")
    if not isinstance(results, list):
        raise EmptyResult(f"search response has no results array: {body!r}")
    passages = []
    for rank, hit in enumerate(results[:k], start=1):
        text = hit.get("description") or hit.get("snippet") or ""
        if not text:
            continue
        passages.append(
            Passage(
                id=hit.get("url", f"result-{rank}"),
                title=hit.get("title"),
                text=text,
                score=-float(rank),
                source="web",
            )
        )
    return passages


# --- multi-query merging -----------------------------------------------------------


@dataclass
class MultiQueryResult:
    passages: list[Passage]
    failures: list[str] = field(default_factory=list)  # "query: error" notes


def retrieve_multi(
    retriever: Retriever,
    queries: Sequence[str],
    total_k: int = 5,
    mode: str = "total",
) -> MultiQueryResult:
    """Round-robin interleave per-query results, dedupe by id, truncate.

    mode "total": every query fetches up to total_k and the merged list is
    cut to total_k, so the reader context budget matches the single-query
    case. mode "per-query": no overall truncation (up to total_k per query
    survives the dedupe).

    If some queries fail and at least one succeeds the result is partial,
    with the failures reported; if every query fails the first error is
    raised.
    """
    if not queries:
        raise ValueError("queries must be non-empty")
    if total_k < 1:
        raise ValueError("total_k must be >= 1")
    if mode not in ("total", "per-query"):
        raise ValueError(f"unknown merge mode {mode!r}")

    per_query: list[list[Passage]] = []
    failures: list[str] = []
    first_error: Exception | None = None
    for query in queries:
        try:
            per_query.append(retriever.search(query, total_k))
        except Exception as exc:  # noqa: BLE001 - backend errors become partial results
            if first_error is None:
                first_error = exc
            failures.append(f"{query}: {exc}")
            per_query.append([])
    if len(failures) == len(queries) and first_error is not None:
        raise first_error

    merged: list[Passage] = []
    seen: set[str] = set()
    for position in range(max(len(lst) for lst in per_query)):
        for lst in per_query:
            if position < len(lst) and lst[position].id not in seen:
                seen.add(lst[position].id)
                merged.append(lst[position])
    if mode == "total":
        merged = merged[:total_k]
    return MultiQueryResult(passages=merged, failures=failures)
