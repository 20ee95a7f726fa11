"""HTTP backend clients speaking the shared vision-service wire protocol.

All three routes travel JSON with base64 PNG payloads (always PNG — lossless
transport is what keeps the byte-exactness guarantees meaningful):

  POST /v1/segment   {image, part, points: [{x, y, positive}], seed}
                     -> {mask, model}
  POST /v1/inpaint   {image, mask} -> {image, model}
  POST /v1/classify  {image} -> {label, scores}
  GET  /healthz      -> {status, fingerprints, ...}

Connection failures raise ``BackendUnreachableError``; any non-200 status or
schema deviation raises ``BackendMalformedResponseError``.
"""

from __future__ import annotations

import base64
import io
from typing import Sequence

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from .errors import BackendMalformedResponseError, BackendUnreachableError
from .types import LABELS, BinaryMask, RasterImage

DEFAULT_TIMEOUT = 30.0


def encode_image_b64(img: RasterImage) -> str:
    buf = io.BytesIO()
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(img.pixels, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_mask_b64(mask: BinaryMask) -> str:
    return encode_image_b64(RasterImage((mask.bits * 255).astype(np.uint8)))


def decode_image_b64(payload: str) -> RasterImage:
    try:
        raw = base64.b64decode(payload, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return RasterImage(np.asarray(im, dtype=np.uint8))
    except (ValueError, UnidentifiedImageError, OSError) as exc:
        raise BackendMalformedResponseError(f"undecodable image payload: {exc}") from exc


def decode_mask_b64(payload: str) -> BinaryMask:
    img = decode_image_b64(payload)
    if img.channels != 1:
        raise BackendMalformedResponseError("mask payload must be a 1-channel PNG")
    return BinaryMask((img.pixels > 0).astype(np.uint8))


def _post(url: str, body: dict, timeout: float) -> dict:
    try:
        resp = requests.post(url, json=body, timeout=timeout)
    except requests.ConnectionError as exc:
        raise BackendUnreachableError(f"cannot reach {url}: {exc}") from exc
    except requests.RequestException as exc:
        raise BackendUnreachableError(f"request to {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise BackendMalformedResponseError(f"{url} answered {resp.status_code}: {resp.text[:200]}")
    try:
        doc = resp.json()
    except ValueError as exc:
        raise BackendMalformedResponseError(f"{url} returned non-JSON body") from exc
    if not isinstance(doc, dict):
        raise BackendMalformedResponseError(f"{url} returned non-object JSON")
    return doc


def _require(doc: dict, key: str, kind, url: str):
    if key not in doc or not isinstance(doc[key], kind):
        raise BackendMalformedResponseError(f"{url}: missing or mistyped field {key!r}")
    return doc[key]


class RemoteSegmenter:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.last_model: str | None = None

    def segment(self, img: RasterImage, part: str, prompts: Sequence, seed: int) -> BinaryMask:
        url = f"{self.base_url}/v1/segment"
        body = {
            "image": encode_image_b64(img),
            "part": part,
            "points": [{"x": p.x, "y": p.y, "positive": bool(p.positive)} for p in prompts],
            "seed": int(seed),
        }
        doc = _post(url, body, self.timeout)
        mask = decode_mask_b64(_require(doc, "mask", str, url))
        self.last_model = _require(doc, "model", str, url)
        if (mask.height, mask.width) != (img.height, img.width):
            raise BackendMalformedResponseError(
                f"{url}: mask {mask.width}x{mask.height} for image {img.width}x{img.height}"
            )
        return mask

    def descriptor(self) -> dict:
        return {"name": f"http:{self.base_url}", "remote": True, "model": self.last_model}


class RemoteInpainter:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.last_model: str | None = None
        self.last_stats = None  # convergence is the remote model's business

    def inpaint(self, img: RasterImage, mask: BinaryMask) -> RasterImage:
        url = f"{self.base_url}/v1/inpaint"
        body = {"image": encode_image_b64(img), "mask": encode_mask_b64(mask)}
        doc = _post(url, body, self.timeout)
        out = decode_image_b64(_require(doc, "image", str, url))
        self.last_model = _require(doc, "model", str, url)
        if out.pixels.shape != img.pixels.shape:
            raise BackendMalformedResponseError(
                f"{url}: result shape {out.pixels.shape} != request {img.pixels.shape}"
            )
        return out

    def descriptor(self) -> dict:
        return {"name": f"http:{self.base_url}", "remote": True, "model": self.last_model}


class RemoteClassifier:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.last_model: str | None = None

    def classify(self, img: RasterImage) -> tuple[str, dict[str, float]]:
        url = f"{self.base_url}/v1/classify"
        doc = _post(url, {"image": encode_image_b64(img)}, self.timeout)
        label = _require(doc, "label", str, url)
        scores = _require(doc, "scores", dict, url)
        if label not in LABELS:
            raise BackendMalformedResponseError(f"{url}: unknown label {label!r}")
        if set(scores) != set(LABELS) or not all(isinstance(v, (int, float)) for v in scores.values()):
            raise BackendMalformedResponseError(f"{url}: malformed scores")
        if abs(sum(scores.values()) - 1.0) > 1e-6:
            raise BackendMalformedResponseError(f"{url}: scores must sum to 1")
        if "model" in doc and isinstance(doc["model"], str):
            self.last_model = doc["model"]
        return label, {k: float(v) for k, v in scores.items()}

    def descriptor(self) -> dict:
        return {"name": f"http:{self.base_url}", "remote": True, "model": self.last_model}


def fetch_health(base_url: str, timeout: float = DEFAULT_TIMEOUT) -> dict:
    url = f"{base_url.rstrip('/')}/healthz"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendUnreachableError(f"cannot reach {url}: {exc}") from exc
    if resp.status_code != 200:
        raise BackendMalformedResponseError(f"{url} answered {resp.status_code}")
    try:
        return resp.json()
    except ValueError as exc:
        raise BackendMalformedResponseError(f"{url} returned non-JSON body") from exc
