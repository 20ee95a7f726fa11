"""Segmentation orchestration: point-prompt sampling, backend dispatch, and
deterministic fusion of per-part masks into one attribute mask.

Backends implement a single ``segment`` call and are expected to be
deterministic for a fixed (image, part, prompts, seed) tuple. Two builtin
backends ship with the toolkit:

* ``oracle`` — content-addressed ground-truth lookup, for pipeline tests and
  backend-free runs; prompts are accepted but ignored.
* ``threshold`` — Otsu intensity split plus flood fill from the positive
  prompts; a genuinely computable baseline with no learned parts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .errors import BackendMalformedResponseError, EmptyMaskError
from .metrics import SegScores, seg_metrics
from .morphmod import StructElement, closing
from .rng import PortableRng
from .types import PARTS, BinaryMask, RasterImage, luma, require_same_shape


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int
    positive: bool = True


@dataclass(frozen=True)
class PartSpec:
    part: str
    prompts: tuple[PointPrompt, ...]

    def __post_init__(self):
        if self.part not in PARTS:
            raise ValueError(f"unknown part {self.part!r}")
        object.__setattr__(self, "prompts", tuple(self.prompts))
        if not any(p.positive for p in self.prompts):
            raise ValueError("need at least one positive prompt")


class SegmenterBackend(Protocol):
    def segment(
        self, img: RasterImage, part: str, prompts: Sequence[PointPrompt], seed: int
    ) -> BinaryMask: ...

    def descriptor(self) -> dict: ...


DEFAULT_PROMPTS = 3


def sample_prompts(gt: BinaryMask, n: int = DEFAULT_PROMPTS, seed: int = 0) -> list[PointPrompt]:
    """Draw n distinct foreground pixels without replacement, seeded.

    Fewer than n foreground pixels means all of them are returned. Pixels are
    enumerated row-major and selected by the portable generator, so the same
    (mask, n, seed) always yields the same prompts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ys, xs = np.nonzero(gt.bits)
    if len(ys) == 0:
        raise EmptyMaskError("cannot sample prompts from an empty mask")
    k = min(n, len(ys))
    picks = PortableRng(seed).sample_indices(len(ys), k)
    return [PointPrompt(int(xs[i]), int(ys[i]), True) for i in picks]


def image_content_key(img: RasterImage) -> str:
    h = hashlib.sha256()
    h.update(f"{img.width}x{img.height}x{img.channels}:".encode())
    h.update(img.data)
    return h.hexdigest()


class OracleSegmenter:
    """Ground-truth lookup keyed by image content hash.

    Registered (image, part) pairs return their stored mask exactly; querying
    an unregistered pair is a contract error, which keeps silent mismatches
    out of pipeline tests.
    """

    def __init__(self):
        self._table: dict[tuple[str, str], BinaryMask] = {}

    def register(self, img: RasterImage, part: str, mask: BinaryMask) -> None:
        require_same_shape(img, mask, "image/mask")
        self._table[(image_content_key(img), part)] = mask

    def register_fixture(self, fixture) -> None:
        for part, mask in fixture.part_masks.items():
            self.register(fixture.image, part, mask)

    @classmethod
    def for_manifest(cls, manifest, parts=PARTS) -> "OracleSegmenter":
        from . import dataio  # local import keeps module deps one-way

        backend = cls()
        for entry in manifest.entries:
            if not entry.masks:
                continue
            img = dataio.load_image(manifest.resolve(entry.image))
            for part in parts:
                if part in entry.masks:
                    backend.register(img, part, dataio.load_mask(manifest.resolve(entry.masks[part])))
        return backend

    def segment(self, img, part, prompts, seed) -> BinaryMask:
        key = (image_content_key(img), part)
        if key not in self._table:
            raise BackendMalformedResponseError(
                f"oracle has no registered mask for part {part!r} of this image"
            )
        return self._table[key]

    def descriptor(self) -> dict:
        return {"name": "oracle", "remote": False, "entries": len(self._table)}


class ThresholdSegmenter:
    """Otsu split + flood fill: the part is the set of connected components
    (4-connected, same intensity side as each positive prompt) containing the
    positive prompts, minus components claimed by negative prompts."""

    def segment(self, img, part, prompts, seed) -> BinaryMask:
        gray = luma(img).pixels
        t = otsu_threshold(gray)
        out = np.zeros(gray.shape, dtype=np.uint8)
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)
        for side in (gray <= t, gray > t):
            labels, _ = ndimage.label(side, structure=structure)
            keep = {
                labels[p.y, p.x]
                for p in prompts
                if p.positive and side[p.y, p.x]
            }
            drop = {
                labels[p.y, p.x]
                for p in prompts
                if not p.positive and side[p.y, p.x]
            }
            for lab in keep - drop:
                out[labels == lab] = 1
        return BinaryMask(out)

    def descriptor(self) -> dict:
        return {"name": "threshold", "remote": False}


def otsu_threshold(gray: np.ndarray) -> int:
    """Classic between-class-variance maximizing threshold on a 256-bin histogram."""
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_t = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    return int(np.argmax(sigma_b))


def segment_part(
    backend: SegmenterBackend, img: RasterImage, spec: PartSpec, seed: int = 0
) -> BinaryMask:
    """Run one backend call and enforce the dimension contract."""
    for p in spec.prompts:
        if not (0 <= p.x < img.width and 0 <= p.y < img.height):
            raise ValueError(f"prompt ({p.x}, {p.y}) outside image {img.width}x{img.height}")
    mask = backend.segment(img, spec.part, spec.prompts, seed)
    if (mask.height, mask.width) != (img.height, img.width):
        raise BackendMalformedResponseError(
            f"backend returned {mask.width}x{mask.height} mask for "
            f"{img.width}x{img.height} image"
        )
    return mask


_FUSE_SE = StructElement.rect(3, 3)


def fuse_parts(parts: Sequence[BinaryMask]) -> BinaryMask:
    """Union of the part masks, then a 3x3 closing to bridge 1-px seams."""
    if not parts:
        raise ValueError("need at least one part mask")
    first = parts[0]
    bits = np.zeros_like(first.bits)
    for m in parts:
        require_same_shape(first, m, "part masks")
        bits |= m.bits
    return closing(BinaryMask(bits), _FUSE_SE)


def evaluate_segmentation(pred: BinaryMask, gt: BinaryMask) -> SegScores:
    """Single source of truth lives in metrics; this is the pipeline alias."""
    return seg_metrics(pred, gt)
