"""Editing-recovery augmentation: select large normal instances from
inspection scenes, edit their crops into defects, paste the edits back at
their source boxes, rewrite the labels, and emit an augmented manifest plus a
reconciling report.

Only the train split is augmented; test entries pass through untouched.
Original manifest entries are never mutated — augmented scenes are new
entries with ``provenance="edited"`` (or ``"copied"`` in the copy control
mode) and a ``source`` pointer back to the scene they came from.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dataio
from .dataio import DatasetManifest, InstanceAnnotation, ManifestEntry
from .editpipe import InpainterBackend, edit_attribute
from .errors import AnnotationError
from .morphmod import ModConfig
from .rng import PortableRng, derive_seed
from .segpipe import PartSpec, PointPrompt, fuse_parts, segment_part
from .types import ATTRIBUTE_PARTS, LABELS, RasterImage, luma

MIN_EDITABLE_SIDE = 64


@dataclass(frozen=True)
class RecoverySpec:
    """Where an edited crop goes back into its inspection image."""

    image_id: str
    box: tuple[int, int, int, int]
    crop: RasterImage
    new_label: str

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if self.crop.width != x1 - x0 or self.crop.height != y1 - y0:
            raise AnnotationError(
                f"crop {self.crop.width}x{self.crop.height} does not match box {self.box}"
            )
        if self.new_label not in ("pin_losing", "nut_losing"):
            raise AnnotationError(f"recovery label must be a defect, got {self.new_label!r}")


def filter_editable(manifest: DatasetManifest, min_side: int = MIN_EDITABLE_SIDE) -> list[InstanceAnnotation]:
    """Normal train-split detection instances strictly larger than min_side."""
    out = []
    for entry in manifest.entries:
        if entry.role != "detection" or entry.split != "train":
            continue
        for ann in entry.instances:
            if ann.label == "normal" and ann.width > min_side and ann.height > min_side:
                out.append(ann)
    return out


def recover(ins: RasterImage, spec: RecoverySpec) -> RasterImage:
    """Paste the crop into the box; every other pixel is copied byte-exact."""
    x0, y0, x1, y1 = spec.box
    if not (0 <= x0 < x1 <= ins.width and 0 <= y0 < y1 <= ins.height):
        raise AnnotationError(f"box {spec.box} outside image {ins.width}x{ins.height}")
    if spec.crop.channels != ins.channels:
        raise AnnotationError("crop and scene channel counts differ")
    out = ins.pixels.copy()
    out[y0:y1, x0:x1] = spec.crop.pixels
    return RasterImage(out)


POLICIES = ("all_pin", "all_nut", "round_robin")  # plus ratio:<p>


def parse_policy(text: str) -> tuple[str, float | None]:
    if text in POLICIES:
        return text, None
    if text.startswith("ratio:"):
        p = float(text.split(":", 1)[1])
        if not 0.0 <= p <= 1.0:
            raise ValueError("ratio must lie in [0, 1]")
        return "ratio", p
    raise ValueError(f"unknown policy {text!r}")


class AttributePolicy:
    """Assigns pin or nut to each instance in presentation order."""

    def __init__(self, policy: str, seed: int = 0):
        self.kind, self.ratio = parse_policy(policy)
        self._rng = PortableRng(seed)
        self._count = 0

    def next_attribute(self) -> str:
        self._count += 1
        if self.kind == "all_pin":
            return "pin"
        if self.kind == "all_nut":
            return "nut"
        if self.kind == "round_robin":
            return "pin" if self._count % 2 == 1 else "nut"
        return "pin" if self._rng.random() < self.ratio else "nut"


def attribute_policy(n: int, policy: str, seed: int = 0) -> list[str]:
    """The attribute sequence a policy yields for n instances."""
    chooser = AttributePolicy(policy, seed)
    return [chooser.next_attribute() for _ in range(n)]


@dataclass
class AugmentationReport:
    """Instance accounting before and after augmentation.

    ``added`` holds the per-class instance deltas contributed by the new
    entries plus the new image count; it must reconcile:
    normal + pin_losing + nut_losing = all = every instance on added images.
    """

    mode: str  # "edited" or "copied"
    original: dict
    added: dict
    skipped: list = field(default_factory=list)  # (image, box, reason)

    def reconciles(self) -> bool:
        per_class = sum(self.added[label] for label in LABELS)
        return per_class == self.added["all"]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "original": self.original,
            "added": self.added,
            "skipped": [
                {"image": im, "box": list(box), "reason": reason}
                for im, box, reason in self.skipped
            ],
        }


def format_augmentation_table(original: dict, *columns: tuple[str, dict]) -> str:
    """Original counts side by side with one +delta column per run report."""
    names = ["Original"] + [f"+{name}" for name, _ in columns]
    rows = [("Inspection images", "images"), ("Normal", "normal"),
            ("Pin losing", "pin_losing"), ("Nut losing", "nut_losing"), ("All", "all")]
    head = f"{'Class':<20}" + "".join(f"{n:>12}" for n in names)
    lines = [head]
    for label, key in rows:
        cells = [f"{original[key]:>12}"]
        for _, added in columns:
            cells.append(f"{'+' + str(added[key]):>12}")
        lines.append(f"{label:<20}" + "".join(cells))
    return "\n".join(lines)


@dataclass
class EraConfig:
    mod: ModConfig = field(default_factory=ModConfig)
    policy: str = "round_robin"
    seed: int = 0
    min_side: int = MIN_EDITABLE_SIDE
    edit_all_instances: bool = True  # False: edit only the first eligible per image
    control_copy: bool = False       # copy-based control group: no editing, no relabel
    n_prompts: int = 3
    parallel: int = 1


def _part_prompts_for_crop(crop: RasterImage, parts) -> list[PartSpec]:
    # detection crops carry no reference masks, so the builtin prompt
    # heuristic seeds each part at the darkest pixel (attributes are dark
    # metal on a bright plate). Oracle backends ignore prompts; learned
    # remote backends are the path to genuinely part-aware prompts.
    gray = luma(crop).pixels
    y, x = np.unravel_index(int(np.argmin(gray)), gray.shape)
    seed_point = PointPrompt(int(x), int(y), True)
    return [PartSpec(part, (seed_point,)) for part in parts]


def _edit_crop(crop, attribute, seg_backend, inpaint_backend, cfg: EraConfig, seed: int):
    parts = ATTRIBUTE_PARTS[attribute]
    masks = [
        segment_part(seg_backend, crop, spec, seed)
        for spec in _part_prompts_for_crop(crop, parts)
    ]
    m_seg = fuse_parts(masks)
    edited, record = edit_attribute(
        crop, m_seg, cfg.mod, inpaint_backend, attribute=attribute
    )
    return edited, record


@dataclass
class _SceneTask:
    entry: ManifestEntry
    jobs: list  # (InstanceAnnotation, attribute)


@dataclass
class _SceneResult:
    entry: ManifestEntry | None
    scene: RasterImage | None
    skipped: list


def _process_scene(manifest, task: _SceneTask, seg_backend, inpainter, cfg, suffix):
    scene = dataio.load_image(manifest.resolve(task.entry.image))
    new_instances = list(task.entry.instances)
    skipped = []
    edited_any = False
    for ann, attribute in task.jobs:
        if cfg.control_copy:
            edited_any = True
            continue  # identity editor: pixels and labels stay
        try:
            crop = dataio.crop_instance(scene, ann)
            seed = derive_seed(cfg.seed, task.entry.image, *ann.box)
            edited_crop, _rec = _edit_crop(crop, attribute, seg_backend, inpainter, cfg, seed)
            new_label = f"{attribute}_losing"
            scene = recover(scene, RecoverySpec(task.entry.image, ann.box, edited_crop, new_label))
            new_instances[new_instances.index(ann)] = InstanceAnnotation(
                ann.image_id, ann.box, new_label, ann.polygon
            )
            edited_any = True
        except Exception as exc:
            skipped.append((task.entry.image, ann.box, str(exc)))
    if not edited_any:
        return _SceneResult(None, None, skipped)
    stem = Path(task.entry.image).stem
    new_entry = ManifestEntry(
        image=f"images/{stem}__{suffix}.png",
        split="train",
        role="detection",
        provenance="copied" if cfg.control_copy else "edited",
        instances=tuple(new_instances),
        source=task.entry.image,
    )
    return _SceneResult(new_entry, scene, skipped)


def era_augment(
    detection_manifest: DatasetManifest,
    seg_backend,
    inpaint_backend: InpainterBackend,
    cfg: EraConfig | None = None,
    out_root=None,
) -> tuple[DatasetManifest, AugmentationReport]:
    """Augment the train split of a detection manifest.

    For each train scene holding at least one eligible normal instance, the
    eligible crops are edited (attribute chosen per policy), recovered in
    place, and the scene re-emitted as a new entry with rewritten labels. In
    copy-control mode the same scenes are duplicated byte-identically with
    labels kept. Per-instance failures are reported and skipped, never fatal.
    """
    cfg = cfg or EraConfig()
    out_root = Path(out_root) if out_root is not None else None
    suffix = "copy" if cfg.control_copy else "edited"

    train = detection_manifest.filtered(split="train", role="detection")
    original_stats = dataio.manifest_stats(detection_manifest.filtered(role="detection"), "train")

    # attribute draws happen in manifest order before any (possibly parallel)
    # image work so the policy stream is independent of scheduling
    policy = AttributePolicy(cfg.policy, cfg.seed)
    tasks = []
    for entry in train.entries:
        eligible = [
            a for a in entry.instances
            if a.label == "normal" and a.width > cfg.min_side and a.height > cfg.min_side
        ]
        if not cfg.edit_all_instances:
            eligible = eligible[:1]
        if not eligible:
            continue
        tasks.append(_SceneTask(entry, [(a, policy.next_attribute()) for a in eligible]))

    def _run(task):
        return _process_scene(detection_manifest, task, seg_backend, inpaint_backend, cfg, suffix)

    if cfg.parallel > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
            results = list(pool.map(_run, tasks))
    else:
        results = [_run(t) for t in tasks]

    new_entries = []
    skipped: list = []
    added = {label: 0 for label in LABELS}
    added["all"] = 0
    added["images"] = 0
    for result in results:
        skipped.extend(result.skipped)
        if result.entry is None:
            continue
        if out_root is not None:
            dataio.save_image(out_root / result.entry.image, result.scene)
        new_entries.append(result.entry)
        added["images"] += 1
        for a in result.entry.instances:
            added[a.label] += 1
            added["all"] += 1

    report = AugmentationReport("copied" if cfg.control_copy else "edited",
                                original_stats, added, skipped)

    # one manifest must resolve both old and new images, so when writing to a
    # separate output root the original refs are rebased to absolute paths
    if out_root is not None:
        carried = tuple(
            replace(
                e,
                image=str(detection_manifest.resolve(e.image)),
                masks={k: str(detection_manifest.resolve(v)) for k, v in e.masks.items()}
                if e.masks else None,
            )
            for e in detection_manifest.entries
        )
        augmented = DatasetManifest(carried + tuple(new_entries), out_root)
    else:
        augmented = DatasetManifest(
            detection_manifest.entries + tuple(new_entries), detection_manifest.root
        )
    return augmented, report
