"""Synthetic fastener fixtures for tests, demos, and backend-free pipeline runs.

Every fixture is a 96x96 RGB crop of a plate with two dark attributes drawn
on it: a three-part pin assembly (head disk ``pin0``, left prong ``pin1``,
right prong ``pin2``) in the upper half and a nut block in the lower half.
Geometry jitters deterministically with the seed but always stays inside the
two fixed zones below, which is what makes the zone-based heuristic
classifier a reliable oracle: an attribute is present exactly when its zone
contains a dark blob. All strokes are at least 5 px thick so a 2x2 opening
never erases a genuine part.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .metrics import HeuristicClassifier, Zone
from .rng import PortableRng
from .types import BinaryMask, RasterImage

SIDE = 96
PIN_ZONE = Zone(2, 2, 94, 46)
NUT_ZONE = Zone(24, 50, 72, 94)


def default_classifier() -> HeuristicClassifier:
    return HeuristicClassifier(PIN_ZONE, NUT_ZONE)


@dataclass(frozen=True)
class BoltFixture:
    image: RasterImage
    part_masks: dict  # pin0/pin1/pin2/nut -> BinaryMask
    seed: int

    def attribute_mask(self, attribute: str) -> BinaryMask:
        if attribute == "nut":
            return self.part_masks["nut"]
        bits = (
            self.part_masks["pin0"].bits
            | self.part_masks["pin1"].bits
            | self.part_masks["pin2"].bits
        )
        return BinaryMask(bits)


def _plate(rng: PortableRng) -> np.ndarray:
    base = 180 + rng.below(16)
    col = np.arange(SIDE, dtype=np.float64)
    grad = base + 8.0 * col / SIDE
    plate = np.repeat(grad[None, :], SIDE, axis=0)
    img = np.stack([plate, plate + 4, plate - 5], axis=2)
    return img.clip(0, 255)


def _disk(cx: int, cy: int, r: int) -> np.ndarray:
    y, x = np.ogrid[:SIDE, :SIDE]
    return ((x - cx) ** 2 + (y - cy) ** 2 <= r * r).astype(np.uint8)


def _bar(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    m = np.zeros((SIDE, SIDE), dtype=np.uint8)
    m[y0:y1, x0:x1] = 1
    return m


def make_bolt_fixture(seed: int) -> BoltFixture:
    """Deterministic normal-bolt crop with exact part masks."""
    rng = PortableRng(seed)
    img = _plate(rng)
    dark = 50 + rng.below(25)

    jx = rng.below(7) - 3  # pin assembly jitter
    jy = rng.below(5) - 2
    head_r = 7 + rng.below(3)
    cx, cy = 48 + jx, 22 + jy
    pin0 = _disk(cx, cy, head_r)
    bar_h = 6 + rng.below(3)
    top = cy - bar_h // 2
    pin1 = _bar(12 + rng.below(4), top, cx - head_r - 2, top + bar_h)
    pin2 = _bar(cx + head_r + 2, top, 84 - rng.below(4), top + bar_h)

    nx = rng.below(7) - 3
    ny = rng.below(5) - 2
    half = 10 + rng.below(3)
    nut = _bar(48 + nx - half, 70 + ny - half, 48 + nx + half, 70 + ny + half)

    masks = {"pin0": pin0, "pin1": pin1, "pin2": pin2, "nut": nut}
    for m in masks.values():
        shade = dark + rng.below(10)
        sel = m.astype(bool)
        img[sel] = [shade, shade + 3, shade + 6]
    return BoltFixture(
        RasterImage(np.floor(img + 0.5).astype(np.uint8)),
        {k: BinaryMask(v) for k, v in masks.items()},
        seed,
    )


@dataclass(frozen=True)
class SceneFixture:
    image: RasterImage
    bolts: list  # (box, BoltFixture) for eligible normals
    decoys: list  # boxes of small normals (too small to edit)
    seed: int


def make_inspection_scene(seed: int, n_bolts: int = 2, n_decoys: int = 1,
                          side: int = 360) -> SceneFixture:
    """Scene with full-size fixtures pasted verbatim plus undersized decoys.

    Pasting verbatim matters: cropping an instance box out of the scene
    returns the fixture crop byte-identical, so content-addressed oracle
    backends resolve crops taken later by the augmentation pipeline.
    """
    rng = PortableRng(seed * 7919 + 17)
    canvas = np.full((side, side, 3), 140, dtype=np.float64)
    rows = np.arange(side, dtype=np.float64)
    canvas += (10.0 * rows / side)[:, None, None]
    canvas = np.floor(canvas + 0.5).clip(0, 255).astype(np.uint8)

    cells = side // 120  # coarse grid placement guarantees disjoint boxes
    slots = [(cx, cy) for cy in range(cells) for cx in range(cells)]
    rng.shuffle(slots)
    if n_bolts + n_decoys > len(slots):
        raise ValueError("too many instances for the scene grid")

    bolts = []
    for k in range(n_bolts):
        sx, sy = slots[k]
        x0 = sx * 120 + rng.below(120 - SIDE)
        y0 = sy * 120 + rng.below(120 - SIDE)
        bolt = make_bolt_fixture(seed * 1000 + k)
        canvas[y0:y0 + SIDE, x0:x0 + SIDE] = bolt.image.pixels
        bolts.append(((x0, y0, x0 + SIDE, y0 + SIDE), bolt))

    decoys = []
    small = 40
    for k in range(n_decoys):
        sx, sy = slots[n_bolts + k]
        x0 = sx * 120 + rng.below(120 - small)
        y0 = sy * 120 + rng.below(120 - small)
        canvas[y0 + 12:y0 + 28, x0 + 8:x0 + 32] = 60
        decoys.append((x0, y0, x0 + small, y0 + small))

    return SceneFixture(RasterImage(canvas), bolts, decoys, seed)


def write_crop_dataset(root, n: int, seed0: int = 0, split: str = "train") -> Path:
    """Materialize n bolt crops + part masks + a generation manifest on disk."""
    root = Path(root)
    entries = []
    for k in range(n):
        bolt = make_bolt_fixture(seed0 + k)
        name = f"bolt_{seed0 + k:04d}"
        dataio.save_image(root / "images" / f"{name}.png", bolt.image)
        mask_refs = {}
        for part, mask in bolt.part_masks.items():
            ref = f"masks/{name}_{part}.png"
            dataio.save_mask(root / ref, mask)
            mask_refs[part] = ref
        entries.append(dataio.ManifestEntry(
            image=f"images/{name}.png", split=split, role="generation",
            provenance="original", masks=mask_refs,
        ))
    manifest = dataio.DatasetManifest(tuple(entries), root)
    path = root / "manifest.jsonl"
    dataio.save_manifest(path, manifest)
    return path


def write_scene_dataset(root, n_scenes: int, seed0: int = 0,
                        n_test: int = 0) -> Path:
    """Materialize inspection scenes + a detection manifest on disk."""
    root = Path(root)
    entries = []
    for k in range(n_scenes + n_test):
        scene = make_inspection_scene(seed0 + k)
        name = f"scene_{seed0 + k:04d}"
        ref = f"images/{name}.png"
        dataio.save_image(root / ref, scene.image)
        instances = [
            dataio.InstanceAnnotation(ref, box, "normal") for box, _ in scene.bolts
        ] + [
            dataio.InstanceAnnotation(ref, box, "normal") for box in scene.decoys
        ]
        entries.append(dataio.ManifestEntry(
            image=ref, split="train" if k < n_scenes else "test", role="detection",
            provenance="original", instances=tuple(instances),
        ))
    manifest = dataio.DatasetManifest(tuple(entries), root)
    path = root / "manifest.jsonl"
    dataio.save_manifest(path, manifest)
    return path
