"""Image and annotation ingestion, instance cropping, and dataset manifests.

File formats owned here:

* images: PNG or JPEG, 8-bit grayscale or RGB (16-bit rejected, not truncated)
* masks: 1-channel PNG with values {0, 255}
* box annotations: one instance per line, ``class cx cy w h`` normalized
* polygon annotations: JSON with ``shapes: [{label, points}]``
* manifests: line-delimited JSON, one record per image:
  ``{image, split, role, provenance, instances: [{box: [4 ints], label}]}``
  plus optional ``masks`` (part -> mask path) and ``source`` (provenance
  pointer for copied/edited entries).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import AnnotationError, ImageDecodeError, ManifestError, UnsupportedImageError
from .rng import PortableRng
from .types import LABELS, BinaryMask, RasterImage

ROLES = ("detection", "generation", "attribute_segmentation")
SPLITS = ("train", "test")
PROVENANCES = ("original", "copied", "edited")
POLY_LABELS = ("nut", "pin0", "pin1", "pin2", "pin")


# ---------------------------------------------------------------- images

def load_image(path) -> RasterImage:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
                raise UnsupportedImageError(f"{path}: {mode} bit depth not supported")
            if mode == "P":
                im = im.convert("RGB")
            elif mode not in ("L", "RGB"):
                raise UnsupportedImageError(f"{path}: mode {mode} not supported")
            return RasterImage(np.asarray(im, dtype=np.uint8))
    except UnidentifiedImageError as exc:
        raise ImageDecodeError(f"{path}: not a decodable PNG/JPEG") from exc
    except OSError as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc


def save_image(path, img: RasterImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(img.pixels, mode=mode).save(path)


def load_mask(path) -> BinaryMask:
    """Read a canonical {0,255} 1-channel PNG mask."""
    img = load_image(path)
    if img.channels != 1:
        raise ImageDecodeError(f"{path}: mask must be 1-channel")
    vals = np.unique(img.pixels)
    if not np.isin(vals, (0, 255)).all():
        raise ImageDecodeError(f"{path}: mask values must be exactly 0 or 255")
    return BinaryMask((img.pixels == 255).astype(np.uint8))


def save_mask(path, mask: BinaryMask) -> None:
    save_image(path, RasterImage((mask.bits * 255).astype(np.uint8)))


# ---------------------------------------------------------------- annotations

@dataclass(frozen=True)
class InstanceAnnotation:
    """A labeled instance box; edges are half-open on the max side."""

    image_id: str
    box: tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max)
    label: str
    polygon: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise AnnotationError(f"degenerate box {self.box}")
        if self.label not in LABELS:
            raise AnnotationError(f"unknown label {self.label!r}")

    @property
    def width(self) -> int:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> int:
        return self.box[3] - self.box[1]


def _round_half_up(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


def parse_box_annotations(
    path, image_w: int, image_h: int, class_map: Mapping[int, str], image_id: str | None = None
) -> list[InstanceAnnotation]:
    """Parse normalized-box lines into pixel-space instances.

    Each edge is derived as round-half-up of (center +- extent/2) in pixels,
    then clamped to the image; a box that rounds to zero area is an error.
    """
    path = Path(path)
    image_id = image_id if image_id is not None else path.stem
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise AnnotationError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(v) for v in parts[1:])
        except ValueError as exc:
            raise AnnotationError(f"{path}:{lineno}: unparseable numbers") from exc
        if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise AnnotationError(f"{path}:{lineno}: values must lie in [0, 1]")
        if cls not in class_map:
            raise AnnotationError(f"{path}:{lineno}: class id {cls} not in class map")
        x0 = max(0, min(image_w, _round_half_up(cx * image_w - w * image_w / 2)))
        x1 = max(0, min(image_w, _round_half_up(cx * image_w + w * image_w / 2)))
        y0 = max(0, min(image_h, _round_half_up(cy * image_h - h * image_h / 2)))
        y1 = max(0, min(image_h, _round_half_up(cy * image_h + h * image_h / 2)))
        if x0 >= x1 or y0 >= y1:
            raise AnnotationError(f"{path}:{lineno}: box has zero area after rounding")
        out.append(InstanceAnnotation(image_id, (x0, y0, x1, y1), class_map[cls]))
    return out


def parse_polygon_annotations(path) -> list[tuple[str, list[tuple[float, float]]]]:
    """Parse a polygon-JSON annotation file into (label, vertices) pairs."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: invalid JSON") from exc
    shapes = doc.get("shapes")
    if not isinstance(shapes, list):
        raise AnnotationError(f"{path}: missing 'shapes' list")
    out = []
    for idx, shape in enumerate(shapes):
        label = shape.get("label")
        if label not in POLY_LABELS:
            raise AnnotationError(f"{path}: shape {idx} has unknown label {label!r}")
        points = shape.get("points")
        if not isinstance(points, list) or len(points) < 3:
            raise AnnotationError(f"{path}: shape {idx} needs at least 3 vertices")
        out.append((label, [(float(x), float(y)) for x, y in points]))
    return out


def rasterize_polygon(polygon: Sequence[tuple[float, float]], w: int, h: int) -> BinaryMask:
    """Even-odd fill: pixel (x, y) is set when its center (x+0.5, y+0.5) is
    inside the polygon by the crossing-number rule."""
    if len(polygon) < 3:
        raise AnnotationError("polygon needs at least 3 vertices")
    px = np.arange(w, dtype=np.float64) + 0.5
    py = np.arange(h, dtype=np.float64) + 0.5
    cx = np.broadcast_to(px[None, :], (h, w))
    cy = np.broadcast_to(py[:, None], (h, w))
    inside = np.zeros((h, w), dtype=bool)
    n = len(polygon)
    for k in range(n):
        x1, y1 = polygon[k]
        x2, y2 = polygon[(k + 1) % n]
        crosses = (y1 > cy) != (y2 > cy)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (cx < x_at)
    return BinaryMask(inside.astype(np.uint8))


def crop_instance(image: RasterImage, ann: InstanceAnnotation) -> RasterImage:
    """Copy the annotated box out of the image verbatim."""
    x0, y0, x1, y1 = ann.box
    if not (0 <= x0 < x1 <= image.width and 0 <= y0 < y1 <= image.height):
        raise AnnotationError(f"box {ann.box} outside image {image.width}x{image.height}")
    return RasterImage(np.ascontiguousarray(image.pixels[y0:y1, x0:x1]))


# ---------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestEntry:
    image: str
    split: str
    role: str
    provenance: str = "original"
    instances: tuple[InstanceAnnotation, ...] = ()
    masks: Mapping[str, str] | None = None  # part -> mask path
    source: str | None = None               # origin image for copied/edited

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")
        if self.role not in ROLES:
            raise ManifestError(f"unknown role {self.role!r}")
        if self.provenance not in PROVENANCES:
            raise ManifestError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.masks is not None:
            object.__setattr__(self, "masks", dict(self.masks))

    def to_record(self) -> dict:
        rec = {
            "image": self.image,
            "split": self.split,
            "role": self.role,
            "provenance": self.provenance,
            "instances": [
                {"box": list(a.box), "label": a.label}
                | ({"polygon": [list(p) for p in a.polygon]} if a.polygon else {})
                for a in self.instances
            ],
        }
        if self.masks:
            rec["masks"] = dict(sorted(self.masks.items()))
        if self.source is not None:
            rec["source"] = self.source
        return rec


_ENTRY_KEYS = {"image", "split", "role", "provenance", "instances", "masks", "source"}
_INSTANCE_KEYS = {"box", "label", "polygon"}


def _entry_from_record(rec: dict, where: str) -> ManifestEntry:
    unknown = set(rec) - _ENTRY_KEYS
    if unknown:
        raise ManifestError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("image", "split", "role"):
        if key not in rec:
            raise ManifestError(f"{where}: missing {key!r}")
    instances = []
    for inst in rec.get("instances", []):
        bad = set(inst) - _INSTANCE_KEYS
        if bad:
            raise ManifestError(f"{where}: unknown instance keys {sorted(bad)}")
        poly = inst.get("polygon")
        try:
            instances.append(
                InstanceAnnotation(
                    rec["image"],
                    tuple(int(v) for v in inst["box"]),
                    inst["label"],
                    tuple((float(x), float(y)) for x, y in poly) if poly else None,
                )
            )
        except (KeyError, TypeError, ValueError, AnnotationError) as exc:
            raise ManifestError(f"{where}: bad instance: {exc}") from exc
    try:
        return ManifestEntry(
            image=rec["image"],
            split=rec["split"],
            role=rec["role"],
            provenance=rec.get("provenance", "original"),
            instances=tuple(instances),
            masks=rec.get("masks"),
            source=rec.get("source"),
        )
    except ManifestError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered collection of image records plus the directory they resolve in."""

    entries: tuple[ManifestEntry, ...]
    root: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.root is not None:
            object.__setattr__(self, "root", Path(self.root))

    def resolve(self, ref: str) -> Path:
        p = Path(ref)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def filtered(self, split: str | None = None, role: str | None = None) -> "DatasetManifest":
        keep = [
            e for e in self.entries
            if (split is None or e.split == split) and (role is None or e.role == role)
        ]
        return DatasetManifest(tuple(keep), self.root)

    def __len__(self) -> int:
        return len(self.entries)


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON") from exc
        entries.append(_entry_from_record(rec, f"{path}:{lineno}"))
    manifest = DatasetManifest(tuple(entries), path.parent)
    if check_files:
        for e in manifest.entries:
            refs = [e.image] + sorted((e.masks or {}).values())
            for ref in refs:
                if not manifest.resolve(ref).exists():
                    raise ManifestError(f"{path}: referenced file missing: {ref}")
    return manifest


def dump_manifest(manifest: DatasetManifest) -> str:
    return "".join(json.dumps(e.to_record(), sort_keys=False) + "\n" for e in manifest.entries)


def save_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_manifest(manifest))


def manifest_stats(m: DatasetManifest, split: str | None = None) -> dict:
    """Per-class instance counts plus image count; ``all`` is their sum."""
    sub = m.filtered(split=split)
    counts = {label: 0 for label in LABELS}
    for e in sub.entries:
        for a in e.instances:
            counts[a.label] += 1
    counts["all"] = sum(counts[label] for label in LABELS)
    counts["images"] = len(sub.entries)
    return counts


def format_stats_table(m: DatasetManifest, title: str = "instances") -> str:
    """Counts in the train/test/total layout used throughout the reports."""
    rows = [("Inspection images", "images"), ("Normal", "normal"),
            ("Pin losing", "pin_losing"), ("Nut losing", "nut_losing"), ("All", "all")]
    train = manifest_stats(m, "train")
    test = manifest_stats(m, "test")
    lines = [f"{'Class':<20}{'Train':>8}{'Test':>8}{'Total':>8}"]
    for label, key in rows:
        if key == "normal":
            lines.append(f"{'Number of ' + title:<20}")
        lines.append(f"{label:<20}{train[key]:>8}{test[key]:>8}{train[key] + test[key]:>8}")
    return "\n".join(lines)


def split_manifest(
    m: DatasetManifest, train_fraction: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Seeded shuffle split; entries are relabeled train/test accordingly."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    order = list(range(len(m.entries)))
    PortableRng(seed).shuffle(order)
    n_train = _round_half_up(train_fraction * len(order))
    train_idx = set(order[:n_train])
    train = [replace(m.entries[i], split="train") for i in sorted(train_idx)]
    test = [replace(m.entries[i], split="test") for i in range(len(m.entries)) if i not in train_idx]
    return DatasetManifest(tuple(train), m.root), DatasetManifest(tuple(test), m.root)
