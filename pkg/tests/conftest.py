"""Shared fixtures: scripted LLM transports, static retrievers, HTTP fixture servers."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from errr.gateway import LLMEndpoint, LLMGateway, PriceTable, ResponseCache, RetryPolicy
from errr.retrieval import Passage

# GPT-3.5-Turbo-era rates; also the rates used by the arithmetic examples
PROMPT_RATE = 0.5e-6
COMPLETION_RATE = 1.5e-6


class ScriptedTransport:
    """LLM transport scripted by a responder(prompt, payload) callable.

    The responder returns the completion text, or a (status, body) tuple
    for error scripting. Token usage is reported as whitespace word counts
    so accounting stays deterministic.
    """

    def __init__(self, responder):
        self.responder = responder
        self.calls: list[dict] = []
        self._lock = threading.Lock()

    def post(self, url, headers, payload, timeout):
        with self._lock:
            self.calls.append({"url": url, "headers": headers, "payload": payload})
        prompt = payload["messages"][0]["content"]
        out = self.responder(prompt, payload)
        if isinstance(out, tuple):
            return out
        return 200, completion_body(prompt, out)


def completion_body(prompt: str, text: str) -> dict:
    return {
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        "usage": {
            "prompt_tokens": len(prompt.split()),
            "completion_tokens": len(text.split()),
            "total_tokens": len(prompt.split()) + len(text.split()),
        },
    }


def mock_endpoint(name: str = "mock") -> LLMEndpoint:
    return LLMEndpoint(
        name=name,
        base_url="http://mock.invalid/v1",
        model_id="mock-model",
        price=PriceTable(prompt_rate=PROMPT_RATE, completion_rate=COMPLETION_RATE),
    )


def make_gateway(responder, cache_dir=None, ledger=None, endpoint=None, **kwargs) -> LLMGateway:
    kwargs.setdefault("retry", RetryPolicy(attempts=3, backoff_s=0.0))
    kwargs.setdefault("sleep", lambda s: None)
    return LLMGateway(
        endpoint or mock_endpoint(),
        cache=ResponseCache(cache_dir) if cache_dir else None,
        ledger=ledger,
        transport=ScriptedTransport(responder),
        **kwargs,
    )


class StaticRetriever:
    """Returns canned passages; per-query overrides via a mapping."""

    def __init__(self, passages: list[Passage] | None = None,
                 by_query: dict[str, list[Passage]] | None = None):
        self.passages = passages or []
        self.by_query = by_query or {}
        self.queries: list[str] = []

    def search(self, query: str, k: int) -> list[Passage]:
        self.queries.append(query)
        hits = self.by_query.get(query, self.passages)
        return hits[:k]


def web_passage(pid: str, text: str | None = None, title: str | None = None,
                score: float = -1.0) -> Passage:
    return Passage(id=pid, title=title, text=text or f"text of {pid}", score=score, source="web")


# --- local HTTP fixture servers ----------------------------------------------------


@contextmanager
def http_fixture(routes):
    """Serve `routes`: {(method, path): callable(handler, body) -> (status, obj)}."""

    class Handler(BaseHTTPRequestHandler):
        def _respond(self, method):
            path = urlparse(self.path).path
            handler_fn = routes.get((method, path))
            if handler_fn is None:
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length") or 0)
            body = json.loads(self.rfile.read(length)) if length else None
            status, obj = handler_fn(self, body)
            payload = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            self._respond("GET")

        def do_POST(self):
            self._respond("POST")

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)


def query_params(handler) -> dict:
    return {k: v[0] for k, v in parse_qs(urlparse(handler.path).query).items()}


import re as _re


def fixture_llm_logic(prompt: str) -> str:
    """Deterministic scripted model: answers embed the question index.

    Questions created by fixture_dataset() carry 'fixture question N';
    the reader answer 'answer-N**' therefore scores EM=1 against the
    dataset's gold 'answer-N'.
    """
    m = _re.search(r"fixture question (\d+)", prompt)
    idx = m.group(1) if m else "x"
    if prompt.startswith("Generate a background document"):
        return f"Background for fixture question {idx}. It mentions entity-{idx}."
    if prompt.startswith("Address the following questions"):
        return f"facts about entity-{idx}; fixture question {idx} details**"
    if prompt.startswith("Rewrite better search queries"):
        return f"student query for {idx}**"
    if prompt.startswith("Think step by step"):
        return f"fixture question {idx} rewritten**"
    if prompt.startswith("Answer the question"):
        return f"answer-{idx}**"
    return "unscripted**"


@pytest.fixture
def llm_fixture_server():
    """OpenAI-compatible chat endpoint running fixture_llm_logic."""

    def handle(handler, body):
        prompt = body["messages"][0]["content"]
        return 200, completion_body(prompt, fixture_llm_logic(prompt))

    with http_fixture({("POST", "/v1/chat/completions"): handle}) as base:
        yield base + "/v1"


def run_config_toml(
    *,
    dataset_path,
    llm_base_url,
    search_url=None,
    pipeline="errr",
    cache_dir=None,
    out_dir=None,
    parallelism=2,
    total_k=5,
    extra="",
) -> str:
    lines = [
        f'pipeline = "{pipeline}"',
        f"total_k = {total_k}",
        f"parallelism = {parallelism}",
        f'out_dir = "{out_dir}"',
    ]
    if cache_dir:
        lines.append(f'cache_dir = "{cache_dir}"')
    lines += [
        "",
        "[dataset]",
        'name = "custom"',
        f'path = "{dataset_path}"',
        "",
        "[endpoints.reader]",
        'name = "fixture-llm"',
        f'base_url = "{llm_base_url}"',
        'model_id = "fixture-model"',
        "[endpoints.reader.price]",
        f"prompt_rate = {PROMPT_RATE}",
        f"completion_rate = {COMPLETION_RATE}",
    ]
    if search_url:
        lines += [
            "",
            "[retriever]",
            'kind = "web"',
            f'base_url = "{search_url}"',
            "result_count = 5",
        ]
    if extra:
        lines.append(extra)
    return "\n".join(lines) + "\n"


@pytest.fixture
def search_fixture_server():
    """Brave-style search endpoint serving deterministic canned snippets."""

    def handle(handler, _body):
        params = query_params(handler)
        count = int(params.get("count", 5))
        q = params.get("q", "")
        results = [
            {
                "url": f"https://example.org/{q.replace(' ', '-')}/{i}",
                "title": f"{q} result {i}",
                "description": f"snippet {i} about {q}",
            }
            for i in range(count + 2)  # over-deliver; client truncates
        ]
        return 200, {"web": {"results": results}}

    with http_fixture({("GET", "/search"): handle}) as base:
        yield base + "/search"


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def fixture_dataset(path, n, answered_by=lambda i: [f"answer-{i}"]):
    """n questions in the unified format; question text embeds the index."""
    write_jsonl(
        path,
        [
            {"id": f"q{i}", "question": f"fixture question {i}?", "answers": answered_by(i)}
            for i in range(n)
        ],
    )
    return path
