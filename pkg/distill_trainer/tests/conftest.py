"""Shared fixtures: pair files, a trained session student, a search fixture."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from distill_trainer import TrainSpec, load_student, train

ELICITING_PREFIX = (
    "Rewrite better search queries to acquire or validate the knowledge needed "
    "for the question:"
)


def student_input(i: int) -> str:
    return (
        f"{ELICITING_PREFIX}\n"
        f"Context: Background for fixture question {i}. It mentions entity-{i}.\n"
        f"Question: fixture question {i}?"
    )


def teacher_target(i: int) -> str:
    return f"facts about entity-{i}; fixture question {i} details**"


def write_pairs(path, indices):
    with open(path, "w", encoding="utf-8") as fh:
        for i in indices:
            fh.write(
                json.dumps({"input": student_input(i), "target": teacher_target(i)}) + "\n"
            )
    return path


def parses_as_query_list(raw: str) -> bool:
    """The downstream parsing contract: cut at '**', split on ';', non-empty."""
    head = raw.split("**", 1)[0]
    return any(part.strip() for part in head.split(";"))


@pytest.fixture(scope="session")
def trained_student(tmp_path_factory):
    """One student trained on 50 fixture pairs, reused across tests."""
    tmp = tmp_path_factory.mktemp("student")
    pairs = write_pairs(tmp / "pairs.jsonl", range(50))
    checkpoint = train(
        TrainSpec(
            data_paths=[str(pairs)],
            out_dir=str(tmp / "ckpt"),
            base_model="base",
            epochs=40,
            learning_rate=3e-3,
            batch_size=8,
            seed=11,
        )
    )
    return load_student(checkpoint.path), checkpoint


@contextmanager
def search_fixture():
    """Brave-style GET endpoint returning deterministic canned snippets."""

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            q = {k: v[0] for k, v in parse_qs(urlparse(self.path).query).items()}
            count = int(q.get("count", 5))
            results = [
                {
                    "url": f"https://fix.test/{abs(hash(q.get('q', ''))) % 1000}/{i}",
                    "title": f"result {i}",
                    "description": f"snippet {i} for {q.get('q', '')[:40]}",
                }
                for i in range(count)
            ]
            payload = json.dumps({"web": {"results": results}}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}/search"
    finally:
        server.shutdown()
        thread.join(timeout=5)
