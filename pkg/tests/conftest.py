import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from patentrag.corpus import PatentRecord


class FakeEndpoint:
    """Local JSON endpoint; ``respond(body) -> (status, payload)`` is swappable per test."""

    def __init__(self):
        self.requests = []
        self.respond = lambda body: (200, {})
        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                raw = self.rfile.read(int(self.headers.get("Content-Length") or 0))
                body = json.loads(raw)
                endpoint.requests.append({"body": body, "headers": dict(self.headers)})
                status, payload = endpoint.respond(body)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/endpoint"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def fake_endpoint():
    ep = FakeEndpoint()
    yield ep
    ep.close()


def make_record(app_no="US1", title="Title", abstract="Abstract text", domain="general",
                date="2020-01-01", background=None, **kw):
    return PatentRecord(
        application_number=app_no,
        title=title,
        abstract=abstract,
        application_date=date,
        field_of_invention=domain,
        background=background,
        **kw,
    )


@pytest.fixture
def small_corpus():
    return [
        make_record("US001", "Lithium anode coating", "A lithium anode with a protective coating layer.",
                    "battery chemistry"),
        make_record("US002", "Cardiac stent delivery", "A stent delivery catheter for cardiac vessels.",
                    "biomedical engineering"),
        make_record("US003", "Database query cache", "A cache for database query results on a server.",
                    "information technology"),
        make_record("US004", "Hydraulic gearbox valve", "A valve controlling hydraulic pressure in a gearbox.",
                    "mechanical manufacturing"),
        make_record("US005", "Sodium ion electrolyte", "An electrolyte for sodium ion battery cells.",
                    "battery chemistry"),
        make_record("US006", "Network packet router", "A router forwarding network packets by protocol.",
                    "information technology"),
    ]


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
