"""Remote client behavior against a scripted in-process HTTP server."""

from __future__ import annotations

import base64
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from capcycle import images
from capcycle.backends.remote import (
    TOKEN_ENV_VAR,
    RemoteCaptioner,
    RemoteEncoder,
    RemoteGenerator,
    RemoteInferenceClient,
)
from capcycle.errors import BackendFaultError, ContentPolicyError, TransportError
from capcycle.types import BackendDescriptor, Caption
from conftest import make_image, synthetic_pixels


class _ScriptedHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        srv = self.server
        with srv.lock:
            srv.in_flight += 1
            srv.max_in_flight = max(srv.max_in_flight, srv.in_flight)
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length)) if length else {}
            with srv.lock:
                srv.requests.append(
                    {
                        "path": self.path,
                        "body": body,
                        "auth": self.headers.get("Authorization"),
                        "at": time.monotonic(),
                    }
                )
                action = srv.script.pop(0) if srv.script else srv.default_action
            if action.get("sleep"):
                time.sleep(action["sleep"])
            payload = json.dumps(action.get("body", {})).encode()
            self.send_response(action.get("status", 200))
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except BrokenPipeError:
            pass
        finally:
            with srv.lock:
                srv.in_flight -= 1

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    server.daemon_threads = True
    server.script = []
    server.default_action = {"status": 200, "body": {}}
    server.requests = []
    server.lock = threading.Lock()
    server.in_flight = 0
    server.max_in_flight = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.url = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()


def _client(server, **kw):
    kw.setdefault("timeout_s", 2.0)
    kw.setdefault("max_retries", 3)
    kw.setdefault("backoff_base_s", 0.01)
    return RemoteInferenceClient(server.url, **kw)


class TestClient:
    def test_caption_round_trip_with_bearer_token(self, fake_server, monkeypatch):
        monkeypatch.setenv(TOKEN_ENV_VAR, "sekrit")
        fake_server.default_action = {"status": 200, "body": {"caption": "a dog"}}
        out = _client(fake_server).caption("aW1n", "A short image caption:")
        assert out == "a dog"
        req = fake_server.requests[0]
        assert req["path"] == "/v1/caption"
        assert req["auth"] == "Bearer sekrit"
        assert req["body"] == {"image_b64": "aW1n", "prompt": "A short image caption:"}

    def test_retries_5xx_then_succeeds(self, fake_server):
        fake_server.script = [
            {"status": 503, "body": {"error": {"code": "busy", "message": "load"}}},
            {"status": 503, "body": {"error": {"code": "busy", "message": "load"}}},
            {"status": 200, "body": {"caption": "ok"}},
        ]
        assert _client(fake_server, max_retries=3).caption("x", "p") == "ok"
        assert len(fake_server.requests) == 3

    def test_retry_budget_is_a_hard_cap(self, fake_server):
        fake_server.default_action = {
            "status": 503,
            "body": {"error": {"code": "busy", "message": "load"}},
        }
        with pytest.raises(TransportError):
            _client(fake_server, max_retries=2).caption("x", "p")
        assert len(fake_server.requests) == 2

    def test_exponential_backoff_spacing(self, fake_server):
        fake_server.default_action = {
            "status": 503,
            "body": {"error": {"code": "busy", "message": "load"}},
        }
        with pytest.raises(TransportError):
            _client(fake_server, max_retries=3, backoff_base_s=0.05).caption("x", "p")
        times = [r["at"] for r in fake_server.requests]
        assert times[1] - times[0] >= 0.05
        assert times[2] - times[1] >= 0.10

    def test_per_attempt_timeout_then_transport_error(self, fake_server):
        fake_server.default_action = {"status": 200, "sleep": 0.5, "body": {"caption": "slow"}}
        client = _client(fake_server, timeout_s=0.1, max_retries=2, backoff_base_s=0.01)
        start = time.monotonic()
        with pytest.raises(TransportError):
            client.caption("x", "p")
        assert time.monotonic() - start < 2.0
        assert len(fake_server.requests) == 2

    def test_content_policy_error_carries_provider_message(self, fake_server):
        fake_server.default_action = {
            "status": 422,
            "body": {
                "error": {"code": "content_policy_violation", "message": "unsafe prompt"}
            },
        }
        with pytest.raises(ContentPolicyError, match="unsafe prompt"):
            _client(fake_server).generate("bad", 0, {})

    def test_plain_4xx_not_retried(self, fake_server):
        fake_server.default_action = {
            "status": 400,
            "body": {"error": {"code": "bad_request", "message": "nope"}},
        }
        with pytest.raises(BackendFaultError, match="bad_request"):
            _client(fake_server).caption("x", "p")
        assert len(fake_server.requests) == 1

    def test_embed_vector_dim_consistency(self, fake_server):
        fake_server.default_action = {"status": 200, "body": {"vector": [1.0, 2.0], "dim": 3}}
        with pytest.raises(BackendFaultError):
            _client(fake_server).embed("x")

    def test_in_flight_limit_respected(self, fake_server):
        fake_server.default_action = {"status": 200, "sleep": 0.1, "body": {"caption": "c"}}
        client = _client(fake_server, max_in_flight=2)
        with ThreadPoolExecutor(max_workers=6) as pool:
            list(pool.map(lambda _: client.caption("x", "p"), range(6)))
        assert fake_server.max_in_flight <= 2


class TestRemoteHandles:
    def test_generator_decodes_wire_image(self, fake_server):
        pixels = synthetic_pixels("wire")
        fake_server.default_action = {
            "status": 200,
            "body": {"image_b64": base64.b64encode(images.encode_png(pixels)).decode()},
        }
        desc = BackendDescriptor(
            kind="generator", name="sd3-medium", version="3.0",
            params={"base_url": fake_server.url, "steps": 28, "guidance": 7.0},
        )
        gen = RemoteGenerator(desc, _client(fake_server))
        out = gen.generate(Caption(text="a dog"), seed=5)
        assert images.pixel_hash(out) == images.pixel_hash(pixels)
        body = fake_server.requests[0]["body"]
        assert body["seed"] == 5
        assert body["params"] == {"steps": 28, "guidance": 7.0}

    def test_encoder_enforces_descriptor_dim(self, fake_server, image_dir):
        ref = make_image(image_dir, "remote-enc")
        fake_server.default_action = {
            "status": 200,
            "body": {"vector": [0.1] * 4, "dim": 4},
        }
        desc = BackendDescriptor(
            kind="encoder", name="dinov2-vitb14", version="1.0",
            params={"base_url": fake_server.url, "dim": 768},
        )
        enc = RemoteEncoder(desc, _client(fake_server))
        with pytest.raises(BackendFaultError, match="descriptor pins 768"):
            enc.embed(ref)

    def test_captioner_truncates_and_tags_source(self, fake_server, image_dir):
        ref = make_image(image_dir, "remote-cap")
        long_text = " ".join(f"w{i}" for i in range(150))
        fake_server.default_action = {"status": 200, "body": {"caption": long_text}}
        desc = BackendDescriptor(
            kind="captioner", name="instructblip-vicuna7b", version="1.0",
            params={"base_url": fake_server.url, "token_limit": 100},
        )
        cap = RemoteCaptioner(desc, _client(fake_server)).caption(ref)
        assert len(cap.text.split()) == 100
        assert cap.source.value == "model_generated"
