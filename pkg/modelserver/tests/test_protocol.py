"""Protocol conformance: the server must pass the exact suite the toolkit's
builtin mock server passes, plus the status-code and loading-state details."""

import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from modelserver import ServerConfig, create_app
from sbde.conformance import run_protocol_suite


def b64_png(arr) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


@pytest.fixture()
def client():
    with TestClient(create_app(ServerConfig(max_image_side=256))) as c:
        yield c


def sample_image():
    img = np.full((32, 32, 3), 200, dtype=np.uint8)
    img[8:16, 8:16] = 40
    return img


class TestRoutes:
    def test_healthz_advertises_fingerprints(self, client):
        doc = client.get("/healthz").json()
        assert set(doc["fingerprints"]) == {"segment", "inpaint", "classify"}
        assert doc["max_image_side"] == 256

    def test_segment_ok(self, client):
        resp = client.post("/v1/segment", json={
            "image": b64_png(sample_image()),
            "part": "pin0",
            "points": [{"x": 10, "y": 10, "positive": True}],
            "seed": 0,
        })
        assert resp.status_code == 200
        doc = resp.json()
        mask = np.asarray(Image.open(io.BytesIO(base64.b64decode(doc["mask"]))))
        assert mask.shape == (32, 32)
        assert set(np.unique(mask)) <= {0, 255}

    def test_inpaint_ok_and_dim_clash_400(self, client):
        img = b64_png(sample_image())
        mask = b64_png(np.zeros((32, 32), dtype=np.uint8))
        assert client.post("/v1/inpaint", json={"image": img, "mask": mask}).status_code == 200
        small = b64_png(np.zeros((8, 8), dtype=np.uint8))
        assert client.post("/v1/inpaint", json={"image": img, "mask": small}).status_code == 400

    def test_classify_ok(self, client):
        resp = client.post("/v1/classify", json={"image": b64_png(sample_image())})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["label"] in ("normal", "pin_losing", "nut_losing")
        assert abs(sum(doc["scores"].values()) - 1.0) <= 1e-6

    def test_schema_violations_400(self, client):
        img = b64_png(sample_image())
        cases = [
            ("/v1/segment", {"part": "pin0", "points": [], "seed": 0}),
            ("/v1/segment", {"image": img, "part": "fin",
                             "points": [{"x": 1, "y": 1, "positive": True}], "seed": 0}),
            ("/v1/segment", {"image": img, "part": "pin0", "points": "nope", "seed": 0}),
            ("/v1/segment", {"image": img, "part": "pin0",
                             "points": [{"x": 999, "y": 1, "positive": True}], "seed": 0}),
            ("/v1/inpaint", {"image": img}),
            ("/v1/classify", {"imagen": img}),
            ("/v1/classify", {"image": 17}),
        ]
        for route, body in cases:
            assert client.post(route, json=body).status_code == 400, (route, body)

    def test_undecodable_payloads_422(self, client):
        junk = base64.b64encode(b"never a png").decode()
        img = b64_png(sample_image())
        cases = [
            ("/v1/segment", {"image": junk, "part": "pin0",
                             "points": [{"x": 0, "y": 0, "positive": True}], "seed": 0}),
            ("/v1/inpaint", {"image": junk, "mask": img}),
            ("/v1/inpaint", {"image": img, "mask": junk}),
            ("/v1/classify", {"image": junk}),
        ]
        for route, body in cases:
            assert client.post(route, json=body).status_code == 422, (route, body)

    def test_oversize_image_400(self, client):
        big = b64_png(np.zeros((300, 10), dtype=np.uint8))
        resp = client.post("/v1/classify", json={"image": big})
        assert resp.status_code == 400

    def test_503_while_loading(self):
        app = create_app(ServerConfig())
        unstarted = TestClient(app)  # no context manager: lifespan never ran
        assert unstarted.get("/healthz").status_code == 503
        assert unstarted.post(
            "/v1/classify", json={"image": b64_png(sample_image())}
        ).status_code == 503

    def test_deterministic_responses(self, client):
        body = {
            "image": b64_png(sample_image()),
            "part": "nut",
            "points": [{"x": 10, "y": 10, "positive": True}],
            "seed": 7,
        }
        assert client.post("/v1/segment", json=body).json() == \
            client.post("/v1/segment", json=body).json()


def test_passes_primary_conformance_suite(live_server):
    report = run_protocol_suite(live_server, seed=13)
    assert report.ok, report.failures
    assert report.checks > 30
