"""Protocol conformance suite run against any vision-service endpoint.

The same checks gate the builtin mock server and external model servers:
schema-valid answers on the three routes, dimension and score contracts,
response determinism, correct 400/422 triage of malformed payloads, and
survival under fuzzed request bodies. Each check appends a failure string on
violation; an empty failure list means the endpoint conforms.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np
import requests

from .rng import PortableRng
from .remote import (
    RemoteClassifier,
    RemoteInpainter,
    RemoteSegmenter,
    encode_image_b64,
    encode_mask_b64,
    fetch_health,
)
from .segpipe import PointPrompt
from .types import LABELS, BinaryMask, RasterImage


@dataclass
class ConformanceReport:
    failures: list = field(default_factory=list)
    checks: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def expect(self, condition: bool, message: str):
        self.checks += 1
        if not condition:
            self.failures.append(message)


def _test_image(seed: int, side: int = 48) -> RasterImage:
    rng = np.random.default_rng(seed)
    px = rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
    px[10:30, 10:30] = 40  # a dark blob so segmentation has something to find
    return RasterImage(px)


def _test_mask(side: int = 48) -> BinaryMask:
    bits = np.zeros((side, side), dtype=np.uint8)
    bits[12:20, 12:20] = 1
    return BinaryMask(bits)


def _status_of(base_url: str, route: str, body) -> int:
    resp = requests.post(f"{base_url}{route}", data=body if isinstance(body, bytes) else None,
                         json=None if isinstance(body, bytes) else body, timeout=30)
    return resp.status_code


def run_protocol_suite(base_url: str, seed: int = 0, fuzz_cases: int = 24) -> ConformanceReport:
    report = ConformanceReport()
    base_url = base_url.rstrip("/")
    img = _test_image(seed)
    mask = _test_mask()

    # healthz advertises stable fingerprints
    try:
        health = fetch_health(base_url)
        report.expect(isinstance(health.get("fingerprints"), dict)
                      and set(health["fingerprints"]) >= {"segment", "inpaint", "classify"},
                      "healthz must advertise fingerprints for all three routes")
        report.expect(fetch_health(base_url) == health, "healthz must be stable")
    except Exception as exc:
        report.expect(False, f"healthz failed: {exc}")

    # segment: dims contract + determinism
    seg = RemoteSegmenter(base_url)
    prompts = [PointPrompt(20, 20, True)]
    try:
        m1 = seg.segment(img, "pin0", prompts, seed=7)
        m2 = seg.segment(img, "pin0", prompts, seed=7)
        report.expect((m1.height, m1.width) == (img.height, img.width),
                      "segment mask dimensions must equal request image dimensions")
        report.expect(m1 == m2, "segment must be deterministic for fixed inputs and seed")
        report.expect(isinstance(seg.last_model, str) and seg.last_model != "",
                      "segment must echo a model fingerprint")
    except Exception as exc:
        report.expect(False, f"segment valid-request flow failed: {exc}")

    # inpaint: shape contract, unmasked-region restore, determinism
    inp = RemoteInpainter(base_url)
    try:
        out1 = inp.inpaint(img, mask)
        out2 = inp.inpaint(img, mask)
        report.expect(out1.pixels.shape == img.pixels.shape,
                      "inpaint result shape must equal request shape")
        report.expect(out1 == out2, "inpaint must be deterministic")
        empty = BinaryMask(np.zeros((img.height, img.width), dtype=np.uint8))
        restored = inp.inpaint(img, empty)
        composite = np.where(empty.bits[:, :, None].astype(bool), restored.pixels, img.pixels)
        report.expect(bool((composite == img.pixels).all()),
                      "empty-mask inpaint must be identity after outside-mask restore")
    except Exception as exc:
        report.expect(False, f"inpaint valid-request flow failed: {exc}")

    # classify: label enum + score simplex
    cls = RemoteClassifier(base_url)
    try:
        label, scores = cls.classify(img)
        report.expect(label in LABELS, "classify label must be one of the three classes")
        report.expect(abs(sum(scores.values()) - 1.0) <= 1e-6,
                      "classify scores must sum to 1 within 1e-6")
    except Exception as exc:
        report.expect(False, f"classify valid-request flow failed: {exc}")

    # schema violations -> 400
    good_img = encode_image_b64(img)
    schema_cases = [
        ("/v1/segment", {"part": "pin0", "points": [], "seed": 0}),          # missing image
        ("/v1/segment", {"image": good_img, "part": "fin", "points": [{"x": 1, "y": 1, "positive": True}], "seed": 0}),
        ("/v1/segment", {"image": good_img, "part": "pin0", "points": "nope", "seed": 0}),
        ("/v1/segment", {"image": good_img, "part": "pin0",
                         "points": [{"x": 9999, "y": 1, "positive": True}], "seed": 0}),
        ("/v1/inpaint", {"image": good_img}),                                 # missing mask
        ("/v1/inpaint", {"image": good_img, "mask": encode_mask_b64(_test_mask(12))}),  # dim clash
        ("/v1/classify", {"imagen": good_img}),
        ("/v1/classify", {"image": 1234}),
    ]
    for route, body in schema_cases:
        try:
            status = _status_of(base_url, route, body)
            report.expect(status == 400, f"{route} schema violation must be 400, got {status}")
        except Exception as exc:
            report.expect(False, f"{route} schema case crashed the transport: {exc}")

    # undecodable payloads -> 422
    junk_b64 = base64.b64encode(b"definitely not a png").decode()
    undecodable_cases = [
        ("/v1/segment", {"image": junk_b64, "part": "pin0",
                         "points": [{"x": 0, "y": 0, "positive": True}], "seed": 0}),
        ("/v1/inpaint", {"image": junk_b64, "mask": encode_mask_b64(mask)}),
        ("/v1/inpaint", {"image": good_img, "mask": junk_b64}),
        ("/v1/classify", {"image": junk_b64}),
    ]
    for route, body in undecodable_cases:
        try:
            status = _status_of(base_url, route, body)
            report.expect(status == 422, f"{route} undecodable payload must be 422, got {status}")
        except Exception as exc:
            report.expect(False, f"{route} undecodable case crashed the transport: {exc}")

    # fuzz: arbitrary bodies never yield 5xx and never kill the server
    rng = PortableRng(seed)
    routes = ["/v1/segment", "/v1/inpaint", "/v1/classify"]
    for k in range(fuzz_cases):
        route = routes[rng.below(len(routes))]
        choice = rng.below(4)
        if choice == 0:
            body: object = bytes(rng.below(256) for _ in range(rng.below(64)))
        elif choice == 1:
            body = json.dumps([1, 2, 3]).encode()
        elif choice == 2:
            body = {"image": "".join(chr(97 + rng.below(26)) for _ in range(rng.below(40)))}
        else:
            body = {"seed": "x", "points": {"x": None}, "image": rng.below(10)}
        try:
            status = _status_of(base_url, route, body)
            report.expect(400 <= status < 500,
                          f"fuzz case {k} on {route}: expected 4xx, got {status}")
        except Exception as exc:
            report.expect(False, f"fuzz case {k} on {route} crashed the transport: {exc}")

    # server must still answer a valid request after the fuzz barrage
    try:
        label, _ = RemoteClassifier(base_url).classify(img)
        report.expect(label in LABELS, "server must stay healthy after fuzzing")
    except Exception as exc:
        report.expect(False, f"server unhealthy after fuzzing: {exc}")
    return report
