"""Base64 PNG transport helpers.

Payloads travel as base64-encoded PNG, never JPEG: clients re-composite
pixels byte-exactly and lossy transport would silently break that.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image, UnidentifiedImageError


class PayloadDecodeError(Exception):
    """Body field was present and typed correctly but does not decode."""


def decode_image(payload: str) -> np.ndarray:
    """Base64 PNG -> uint8 array (h, w) or (h, w, 3)."""
    try:
        raw = base64.b64decode(payload, validate=True)
    except (ValueError, TypeError) as exc:
        raise PayloadDecodeError(f"field is not valid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise PayloadDecodeError(f"payload is not a decodable PNG: {exc}") from exc


def decode_mask(payload: str, expect_shape=None) -> np.ndarray:
    """Base64 1-channel PNG -> {0,1} uint8 array."""
    arr = decode_image(payload)
    if arr.ndim != 2:
        raise PayloadDecodeError("mask payload must be a 1-channel PNG")
    mask = (arr > 0).astype(np.uint8)
    return mask


def encode_array(arr: np.ndarray) -> str:
    """uint8 array -> base64 PNG."""
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_mask(mask: np.ndarray) -> str:
    return encode_array((mask.astype(np.uint8) * 255))
