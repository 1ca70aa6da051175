"""Shared fixtures: toy corpora and an in-process HTTP server harness."""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager

import pytest
import uvicorn

from rcgauge.core import Document
from rcgauge.retrieval import build_index


@pytest.fixture
def toy_docs() -> list[Document]:
    return [
        Document(doc_id="d1", text="a a b"),
        Document(doc_id="d2", text="b c"),
        Document(doc_id="d3", text="a c c"),
    ]


@pytest.fixture
def toy_index(toy_docs):
    return build_index(toy_docs)


@contextmanager
def run_app(app):
    """Serve an ASGI app on an ephemeral localhost port for one test."""
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10.0
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("test server failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10.0)


@pytest.fixture
def serve():
    return run_app
