import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

SCENARIO_DIR = Path(__file__).parent.parent / "src" / "fabula" / "data" / "scenarios"


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


def load_scenario(stem: str) -> dict:
    return json.loads((SCENARIO_DIR / f"{stem}.scenario.json").read_text(encoding="utf-8"))


class StubLmHandler(BaseHTTPRequestHandler):
    """Chat-completion stub: deterministic response derived from the request.

    The class-level `failures` list is consumed one status code per request
    before any successful answer is produced.
    """

    failures: list
    calls: list

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        type(self).calls.append(body)
        if type(self).failures:
            status = type(self).failures.pop(0)
            self.send_response(status)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        prompt = body["messages"][0]["content"]
        text = f"stub-{len(prompt)}-{body['seed']}"
        payload = json.dumps({"choices": [{"message": {"content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def stub_lm_server():
    handler = type("Handler", (StubLmHandler,), {"failures": [], "calls": []})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}"
    yield url, handler
    server.shutdown()
