from __future__ import annotations

import contextlib
import io
import json
import os
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from tracefix.cli import main

DATA = Path(__file__).parent / "data"
CANARY_SECRET = "sk-canary-7f3a9c2e51d04b8a"

ACCEPTANCE_LINES: list[str] = []
EMITTED: list[tuple[str, bytes]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@dataclass
class CliResult:
    code: int
    stdout: str
    stderr: str
    files: dict[str, bytes]


def _snapshot(root: Path) -> dict[Path, float]:
    return {p: p.stat().st_mtime_ns for p in root.rglob("*") if p.is_file()}


def run_cli(argv, cwd: Path, env: dict | None = None) -> CliResult:
    """Run the CLI in-process and record every byte it emits.

    Output files written under ``cwd`` during the run count as emitted too.
    Any occurrence of the canary secret fails the calling test immediately.
    """
    before = _snapshot(cwd)
    out, err = io.StringIO(), io.StringIO()
    saved = dict(os.environ)
    old_cwd = os.getcwd()
    os.environ["JUDGE_API_KEY"] = CANARY_SECRET
    os.environ.update(env or {})
    try:
        os.chdir(cwd)
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main([str(a) for a in argv])
    finally:
        os.chdir(old_cwd)
        os.environ.clear()
        os.environ.update(saved)
    after = _snapshot(cwd)
    files = {str(p.relative_to(cwd)): p.read_bytes() for p, t in after.items() if before.get(p) != t}
    label = " ".join(str(a) for a in argv)
    emitted = [("stdout", out.getvalue().encode()), ("stderr", err.getvalue().encode())]
    emitted += [(name, data) for name, data in files.items()]
    for where, data in emitted:
        EMITTED.append((f"{label} :: {where}", data))
        assert CANARY_SECRET.encode() not in data, f"secret leaked in {where} of `{label}`"
    return CliResult(code, out.getvalue(), err.getvalue(), files)


@pytest.fixture
def cli(tmp_path):
    return lambda *argv, env=None: run_cli(argv, tmp_path, env)


@pytest.fixture
def data_dir() -> Path:
    return DATA


# --- stub chat-completions server --------------------------------------------------


class StubServer:
    """Replays a list of (status, body) responses and records requests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                stub.headers.append(dict(self.headers))
                stub.requests.append(json.loads(body or b"{}"))
                idx = min(len(stub.requests) - 1, len(stub.responses) - 1)
                status, payload = stub.responses[idx]
                data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def chat_reply(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


@pytest.fixture
def stub_server():
    servers = []

    def start(responses):
        s = StubServer(responses).__enter__()
        servers.append(s)
        return s

    yield start
    for s in servers:
        s.__exit__(None, None, None)
