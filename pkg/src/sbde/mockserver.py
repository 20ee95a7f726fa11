"""Stdlib HTTP server exposing the builtin backends over the wire protocol.

This is the reference peer for protocol work: client code, the conformance
suite, and any external model server are all expected to interoperate with
it. Responses are deterministic; the advertised model fingerprint hashes the
backend parameters.

Status code policy (shared with any conforming server):
  400  request JSON unparseable, missing/mistyped fields, unknown part,
       out-of-range points, oversize image
  422  syntactically valid request whose base64/PNG payload will not decode
  404  unknown route
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .editpipe import HarmonicInpainter
from .errors import BackendMalformedResponseError
from .metrics import classify as run_classify
from .remote import decode_image_b64, decode_mask_b64, encode_image_b64, encode_mask_b64
from .segpipe import ThresholdSegmenter
from .types import PARTS

MAX_SIDE = 2048


class _HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _fingerprint(kind: str, params: dict) -> str:
    blob = json.dumps({"kind": kind, "params": params}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MockBackends:
    segmenter: object
    inpainter: object
    classifier: object

    def fingerprints(self) -> dict:
        return {
            "segment": _fingerprint("segment", self.segmenter.descriptor()),
            "inpaint": _fingerprint("inpaint", self.inpainter.descriptor()),
            "classify": _fingerprint("classify", self.classifier.descriptor()),
        }


def default_backends() -> MockBackends:
    from .fixtures import default_classifier

    return MockBackends(ThresholdSegmenter(), HarmonicInpainter(), default_classifier())


@dataclass(frozen=True)
class _Point:
    x: int
    y: int
    positive: bool


def _parse_body(handler) -> dict:
    length = int(handler.headers.get("Content-Length", 0))
    raw = handler.rfile.read(length)
    try:
        doc = json.loads(raw)
    except (ValueError, UnicodeDecodeError):
        raise _HttpError(400, "request body is not valid JSON")
    if not isinstance(doc, dict):
        raise _HttpError(400, "request body must be a JSON object")
    return doc


def _field(doc: dict, key: str, kind):
    if key not in doc or not isinstance(doc[key], kind):
        raise _HttpError(400, f"missing or mistyped field {key!r}")
    return doc[key]


def _decode_image(payload: str):
    try:
        img = decode_image_b64(payload)
    except BackendMalformedResponseError as exc:
        raise _HttpError(422, str(exc))
    if max(img.width, img.height) > MAX_SIDE:
        raise _HttpError(400, f"image side exceeds advertised maximum {MAX_SIDE}")
    return img


def _decode_mask(payload: str):
    try:
        return decode_mask_b64(payload)
    except BackendMalformedResponseError as exc:
        raise _HttpError(422, str(exc))


class _Handler(BaseHTTPRequestHandler):
    backends: MockBackends = None  # set by make_server

    def log_message(self, *args):
        pass

    def _send(self, status: int, doc: dict):
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {
                "status": "ok",
                "fingerprints": self.backends.fingerprints(),
                "max_image_side": MAX_SIDE,
            })
        else:
            self._send(404, {"error": "unknown route"})

    def do_POST(self):
        try:
            if self.path == "/v1/segment":
                self._send(200, self._segment())
            elif self.path == "/v1/inpaint":
                self._send(200, self._inpaint())
            elif self.path == "/v1/classify":
                self._send(200, self._classify())
            else:
                self._send(404, {"error": "unknown route"})
        except _HttpError as exc:
            self._send(exc.status, {"error": str(exc)})
        except Exception as exc:  # contract: never crash the connection
            self._send(400, {"error": f"bad request: {exc}"})

    def _segment(self) -> dict:
        doc = _parse_body(self)
        img = _decode_image(_field(doc, "image", str))
        part = _field(doc, "part", str)
        if part not in PARTS:
            raise _HttpError(400, f"unknown part {part!r}")
        seed = _field(doc, "seed", int)
        points_raw = _field(doc, "points", list)
        points = []
        for p in points_raw:
            if not isinstance(p, dict):
                raise _HttpError(400, "points must be objects")
            try:
                pt = _Point(int(p["x"]), int(p["y"]), bool(p["positive"]))
            except (KeyError, TypeError, ValueError):
                raise _HttpError(400, "point needs integer x, y and boolean positive")
            if not (0 <= pt.x < img.width and 0 <= pt.y < img.height):
                raise _HttpError(400, f"point ({pt.x}, {pt.y}) outside image")
            points.append(pt)
        if not any(p.positive for p in points):
            raise _HttpError(400, "need at least one positive point")
        mask = self.backends.segmenter.segment(img, part, points, seed)
        return {
            "mask": encode_mask_b64(mask),
            "model": self.backends.fingerprints()["segment"],
        }

    def _inpaint(self) -> dict:
        doc = _parse_body(self)
        img = _decode_image(_field(doc, "image", str))
        mask = _decode_mask(_field(doc, "mask", str))
        if (mask.height, mask.width) != (img.height, img.width):
            raise _HttpError(400, "mask dimensions must match image")
        out = self.backends.inpainter.inpaint(img, mask)
        return {
            "image": encode_image_b64(out),
            "model": self.backends.fingerprints()["inpaint"],
        }

    def _classify(self) -> dict:
        doc = _parse_body(self)
        img = _decode_image(_field(doc, "image", str))
        label, scores = run_classify(self.backends.classifier, img)
        return {
            "label": label,
            "scores": scores,
            "model": self.backends.fingerprints()["classify"],
        }


def make_server(backends: MockBackends | None = None, port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"backends": backends or default_backends()})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


class running_server:
    """Context manager: serve on a background thread, yield the base URL."""

    def __init__(self, backends: MockBackends | None = None, port: int = 0):
        self._server = make_server(backends, port)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
        return False
