import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from gsdrag.corrector import (
    CorrectorHandle,
    check_health,
    correct_view,
    decode_png,
    encode_png,
    notify_buffer,
)
from gsdrag.errors import CorrectorError, ValidationError


class _StubCorrector(BaseHTTPRequestHandler):
    """Loopback corrector: echoes images back and records headers."""

    received: list = []
    buffers: list = []
    mangle_size = False

    def do_GET(self):
        if self.path == "/health":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"ok")
        else:
            self.send_response(404)
            self.end_headers()

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        if self.path == "/correct":
            type(self).received.append(
                {
                    "strength": self.headers.get("X-Strength"),
                    "view_id": self.headers.get("X-View-Id"),
                    "interval": self.headers.get("X-Interval"),
                    "pass": self.headers.get("X-Pass"),
                }
            )
            img = decode_png(body)
            if type(self).mangle_size:
                img = img[: img.shape[0] // 2]
            self.send_response(200)
            self.send_header("Content-Type", "image/png")
            self.end_headers()
            self.wfile.write(encode_png(img))
        elif self.path == "/buffer":
            type(self).buffers.append(json.loads(body))
            self.send_response(204)
            self.end_headers()
        else:
            self.send_response(404)
            self.end_headers()

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubCorrector.received = []
    _StubCorrector.buffers = []
    _StubCorrector.mangle_size = False
    server = HTTPServer(("127.0.0.1", 0), _StubCorrector)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_identity_returns_input_bits(rng):
    img = rng.uniform(0, 1, (16, 16, 3))
    out = correct_view(CorrectorHandle(kind="identity"), img, 0.9, "v")
    np.testing.assert_array_equal(out, img)


def test_mock_is_seed_stable(rng):
    img = rng.uniform(0, 1, (16, 16, 3))
    h = CorrectorHandle(kind="mock", seed=7)
    a = correct_view(h, img, 0.7, "v3")
    b = correct_view(h, img, 0.7, "v3")
    np.testing.assert_array_equal(a, b)
    c = correct_view(CorrectorHandle(kind="mock", seed=8), img, 0.7, "v3")
    assert not np.array_equal(a, c)


def test_mock_differs_from_input(rng):
    img = rng.uniform(0, 1, (16, 16, 3))
    out = correct_view(CorrectorHandle(kind="mock", seed=1), img, 0.9, "v")
    assert not np.array_equal(out, img)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_strength_validated(rng):
    img = rng.uniform(0, 1, (4, 4, 3))
    with pytest.raises(ValidationError):
        correct_view(CorrectorHandle(kind="identity"), img, 0.0, "v")
    with pytest.raises(ValidationError):
        correct_view(CorrectorHandle(kind="identity"), img, 1.5, "v")


def test_external_header_echo(stub_server, rng):
    img = rng.uniform(0, 1, (12, 12, 3))
    h = CorrectorHandle(kind="external", endpoint=stub_server)
    check_health(h)
    correct_view(h, img, 0.9, "cam01", interval=1, pass_index=1)
    correct_view(h, img, 0.5, "cam01", interval=1, pass_index=4)
    strengths = [r["strength"] for r in _StubCorrector.received]
    assert strengths == ["0.9", "0.5"]
    assert _StubCorrector.received[0]["view_id"] == "cam01"
    assert _StubCorrector.received[0]["interval"] == "1"
    assert _StubCorrector.received[1]["pass"] == "4"


def test_external_round_trip_preserves_quantized_image(stub_server, rng):
    img = np.round(rng.uniform(0, 1, (10, 14, 3)) * 255) / 255
    h = CorrectorHandle(kind="external", endpoint=stub_server)
    out = correct_view(h, img, 0.6, "v")
    np.testing.assert_allclose(out, img, atol=1 / 510)


def test_external_dimension_mismatch_is_protocol_error(stub_server, rng):
    _StubCorrector.mangle_size = True
    img = rng.uniform(0, 1, (12, 12, 3))
    h = CorrectorHandle(kind="external", endpoint=stub_server)
    with pytest.raises(CorrectorError, match="expected"):
        correct_view(h, img, 0.6, "v")


def test_unreachable_endpoint(rng):
    h = CorrectorHandle(kind="external", endpoint="http://127.0.0.1:1", timeout=0.5)
    with pytest.raises(CorrectorError):
        check_health(h)
    with pytest.raises(CorrectorError):
        correct_view(h, rng.uniform(0, 1, (4, 4, 3)), 0.5, "v")


def test_buffer_notification(stub_server):
    h = CorrectorHandle(kind="external", endpoint=stub_server)
    manifest = {"images": [{"view_id": "v", "interval": 0, "path": "/x.png"}]}
    notify_buffer(h, manifest)
    assert _StubCorrector.buffers == [manifest]


def test_buffer_ignored_for_in_process_kinds():
    notify_buffer(CorrectorHandle(kind="identity"), {"images": []})
    notify_buffer(CorrectorHandle(kind="mock"), {"images": []})


def test_unknown_kind_rejected():
    with pytest.raises(ValidationError):
        CorrectorHandle(kind="diffusion")
