"""Serve a trained student behind the OpenAI-compatible chat-completion schema.

The pipeline gateway can target this server with no code changes: swap the
optimizer endpoint's base_url in the run config and set the student prompt
style. Decoding is greedy; sampling parameters are accepted and ignored.
"""

from __future__ import annotations

import itertools
import threading

import uvicorn
from fastapi import FastAPI
from pydantic import BaseModel

from .train import Student, load_student


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatCompletionRequest(BaseModel):
    messages: list[ChatMessage]
    model: str = "student"
    temperature: float = 0.0
    max_tokens: int = 256
    stop: list[str] | None = None


def build_app(student: Student) -> FastAPI:
    app = FastAPI(title="student-optimizer")
    infer_lock = threading.Lock()  # one model instance; requests queue here
    request_ids = itertools.count()

    def completion(request: ChatCompletionRequest) -> dict:
        prompt = "\n".join(m.content for m in request.messages)
        with infer_lock:
            text = student.generate(prompt, max_len=request.max_tokens)
        return {
            "id": f"chatcmpl-student-{next(request_ids)}",
            "object": "chat.completion",
            "model": request.model,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": student.count_tokens(prompt),
                "completion_tokens": student.count_tokens(text),
                "total_tokens": student.count_tokens(prompt) + student.count_tokens(text),
            },
        }

    @app.post("/v1/chat/completions")
    def v1_chat(request: ChatCompletionRequest) -> dict:
        return completion(request)

    @app.post("/chat/completions")
    def chat(request: ChatCompletionRequest) -> dict:
        return completion(request)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "pairs_trained_on": student.manifest.get("pairs")}

    return app


def serve(checkpoint_dir: str, host: str = "127.0.0.1", port: int = 8040) -> None:
    """Blocking entry point for the CLI."""
    uvicorn.run(build_app(load_student(checkpoint_dir)), host=host, port=port, log_level="warning")


class ServerHandle:
    """In-process uvicorn server for tests and embedding."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int = 0):
        self._config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread: threading.Thread | None = None

    def __enter__(self) -> str:
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        while not self._server.started:
            threading.Event().wait(0.02)
        host, port = self._server.servers[0].sockets[0].getsockname()[:2]
        return f"http://{host}:{port}"

    def __exit__(self, *exc) -> None:
        self._server.should_exit = True
        if self._thread:
            self._thread.join(timeout=10)
