"""Attribute removal: optimize the segmentation mask, inpaint the region,
and force-restore every pixel outside the optimized mask.

The outside-mask restore is applied to every backend's output, including
remote neural ones, so "editing changes nothing outside the mask" holds by
construction rather than by trust.

The builtin inpainter extends boundary values into the mask by solving the
discrete Laplace equation (each masked pixel the mean of its 4-neighbors,
border-clamped) with Gauss-Seidel sweeps in raster order. Masked pixels are
seeded with the mean of their connected component's boundary ring, which
keeps every iterate inside the boundary value range — the maximum principle
holds at any iteration count, converged or not.
"""

from __future__ import annotations

import datetime as _dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from . import dataio
from .errors import MaskBecameEmptyError
from .morphmod import ModConfig, mod_optimize
from .rng import derive_seed
from .segpipe import PartSpec, fuse_parts, sample_prompts, segment_part
from .types import ATTRIBUTE_PARTS, BinaryMask, RasterImage, require_same_shape


class InpainterBackend(Protocol):
    def inpaint(self, img: RasterImage, mask: BinaryMask) -> RasterImage: ...

    def descriptor(self) -> dict: ...


@dataclass
class InpaintStats:
    converged: bool
    sweeps: int
    residual: float
    energy_log: list | None = None


_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def _component_seeds(bits: np.ndarray, channel: np.ndarray) -> np.ndarray:
    """Initial value per masked component: mean of its unmasked 4-neighbors."""
    labels, n = ndimage.label(bits, structure=_CROSS)
    seeds = np.zeros(n + 1, dtype=np.float64)
    for lab in range(1, n + 1):
        comp = labels == lab
        ring = ndimage.binary_dilation(comp, structure=_CROSS) & ~bits.astype(bool)
        seeds[lab] = channel[ring].mean() if ring.any() else 128.0
    return seeds[labels]


def _solve_channel(
    channel: np.ndarray, bits: np.ndarray, tol: float, max_iter: int, log_energy: bool
) -> tuple[np.ndarray, InpaintStats]:
    h, w = channel.shape
    v = channel.astype(np.float64)
    seeds = _component_seeds(bits, v)
    sel = bits.astype(bool)
    v[sel] = seeds[sel]

    ys, xs = np.nonzero(bits)
    if len(ys) == 0:
        return v, InpaintStats(True, 0, 0.0, [] if log_energy else None)
    up = (np.maximum(ys - 1, 0), xs)
    down = (np.minimum(ys + 1, h - 1), xs)
    left = (ys, np.maximum(xs - 1, 0))
    right = (ys, np.minimum(xs + 1, w - 1))

    # raster-order Gauss-Seidel, vectorized along anti-diagonals: a pixel's
    # up/left neighbors live on the previous diagonal, so sweeping diagonals
    # in order reproduces the row-major update sequence exactly
    diag = ys + xs
    order = np.argsort(diag, kind="stable")
    groups = []
    for d in np.unique(diag):
        idx = order[np.searchsorted(diag[order], d, side="left"):
                    np.searchsorted(diag[order], d, side="right")]
        groups.append((
            (ys[idx], xs[idx]),
            (up[0][idx], up[1][idx]), (down[0][idx], down[1][idx]),
            (left[0][idx], left[1][idx]), (right[0][idx], right[1][idx]),
        ))

    energy_log = [] if log_energy else None
    residual = np.inf
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        worst = 0.0
        for at, g_up, g_down, g_left, g_right in groups:
            new = 0.25 * (v[g_up] + v[g_down] + v[g_left] + v[g_right])
            delta = np.abs(new - v[at]).max()
            if delta > worst:
                worst = float(delta)
            v[at] = new
        residual = worst
        if log_energy:
            lap = 4.0 * v[ys, xs] - v[up] - v[down] - v[left] - v[right]
            energy_log.append(float((lap * lap).sum()))
        if worst < tol:
            return v, InpaintStats(True, sweeps, residual, energy_log)
    return v, InpaintStats(False, sweeps, residual, energy_log)


def harmonic_inpaint(
    img: RasterImage,
    mask: BinaryMask,
    tol: float = 1e-3,
    max_iter: int | None = None,
    log_energy: bool = False,
) -> tuple[RasterImage, InpaintStats]:
    """Fill masked pixels with the discrete harmonic extension of the rest.

    Channels are solved independently in float64; quantization to 8 bits
    (round half up) happens once at the end. Unmasked pixels come back
    byte-identical. Non-convergence is not an error: the last iterate is
    returned with ``converged=False``.
    """
    require_same_shape(img, mask, "image/mask")
    if max_iter is None:
        max_iter = 10 * (img.width + img.height)
    bits = mask.bits
    if img.channels == 1:
        planes = [img.pixels]
    else:
        planes = [img.pixels[:, :, c] for c in range(3)]

    solved = []
    stats = InpaintStats(True, 0, 0.0, [] if log_energy else None)
    for plane in planes:
        out, st = _solve_channel(plane, bits, tol, max_iter, log_energy)
        solved.append(out)
        stats = InpaintStats(
            stats.converged and st.converged,
            max(stats.sweeps, st.sweeps),
            max(stats.residual, st.residual),
            (stats.energy_log or []) + (st.energy_log or []) if log_energy else None,
        )
    merged = solved[0] if img.channels == 1 else np.stack(solved, axis=2)
    quant = np.floor(merged + 0.5).clip(0, 255).astype(np.uint8)
    sel = bits.astype(bool)
    result = img.pixels.copy()
    result[sel] = quant[sel]
    return RasterImage(result), stats


class HarmonicInpainter:
    """Builtin deterministic inpainter backend."""

    def __init__(self, tol: float = 1e-3, max_iter: int | None = None):
        self.tol = tol
        self.max_iter = max_iter
        self.last_stats: InpaintStats | None = None

    def inpaint(self, img: RasterImage, mask: BinaryMask) -> RasterImage:
        out, stats = harmonic_inpaint(img, mask, self.tol, self.max_iter)
        self.last_stats = stats
        return out

    def descriptor(self) -> dict:
        return {"name": "harmonic", "remote": False, "tol": self.tol}


@dataclass
class EditRecord:
    """Provenance of one attribute edit."""

    source_id: str
    attribute: str
    mask_raw: BinaryMask
    mask_mod: BinaryMask
    mod_config: ModConfig
    backend: str
    created_at: str
    warning: bool = False
    edited_ref: str | None = None
    mask_raw_ref: str | None = None
    mask_mod_ref: str | None = None

    def to_record(self) -> dict:
        return {
            "image": self.source_id,
            "attribute": self.attribute,
            "backend": self.backend,
            "edited": self.edited_ref,
            "mask_raw": self.mask_raw_ref,
            "mask_mod": self.mask_mod_ref,
            "warning": self.warning,
            "created_at": self.created_at,
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def edit_attribute(
    img: RasterImage,
    m_seg: BinaryMask,
    cfg: ModConfig,
    backend: InpainterBackend,
    attribute: str = "pin",
    source_id: str = "",
) -> tuple[RasterImage, EditRecord]:
    """Optimize the mask, inpaint through the backend, restore outside pixels."""
    require_same_shape(img, m_seg, "image/mask")
    m_mod = mod_optimize(m_seg, cfg)
    if m_mod.is_empty():
        raise MaskBecameEmptyError(
            "mask optimization erased every pixel; the segmentation was noise"
        )
    painted = backend.inpaint(img, m_mod)
    require_same_shape(img, painted, "image/inpainted result")
    sel = m_mod.bits.astype(bool)
    out = img.pixels.copy()
    out[sel] = painted.pixels[sel]
    warning = bool(getattr(backend, "last_stats", None) and not backend.last_stats.converged)
    record = EditRecord(
        source_id=source_id,
        attribute=attribute,
        mask_raw=m_seg,
        mask_mod=m_mod,
        mod_config=cfg,
        backend=backend.descriptor()["name"],
        created_at=_now(),
        warning=warning,
    )
    return RasterImage(out), record


def resolve_attribute_mask(
    manifest,
    entry,
    attribute: str,
    segmenter=None,
    seed: int = 0,
    n_prompts: int = 3,
) -> BinaryMask:
    """Attribute mask for a manifest entry.

    Without a segmenter, part mask files are unioned (or the whole-attribute
    file used directly). With one, prompts are sampled from each part's mask
    and the backend's predictions are fused — the evaluation flow where
    reference masks exist but the segmenter under test produces the edit.
    """
    masks = entry.masks or {}
    parts = ATTRIBUTE_PARTS[attribute]
    if segmenter is None:
        if attribute in masks:
            return dataio.load_mask(manifest.resolve(masks[attribute]))
        missing = [p for p in parts if p not in masks]
        if missing:
            raise MaskBecameEmptyError(
                f"entry {entry.image} lacks masks for {missing} and no segmenter was given"
            )
        bits = None
        for part in parts:
            m = dataio.load_mask(manifest.resolve(masks[part]))
            bits = m.bits.copy() if bits is None else (bits | m.bits)
        return BinaryMask(bits)

    img = dataio.load_image(manifest.resolve(entry.image))
    predicted = []
    for k, part in enumerate(parts):
        if part not in masks:
            raise MaskBecameEmptyError(
                f"entry {entry.image} lacks a {part} mask to sample prompts from"
            )
        gt = dataio.load_mask(manifest.resolve(masks[part]))
        prompts = sample_prompts(gt, n_prompts, derive_seed(seed, entry.image, part))
        predicted.append(segment_part(segmenter, img, PartSpec(part, tuple(prompts)), seed))
    return fuse_parts(predicted)


@dataclass
class BatchEditResult:
    records: list
    failures: list  # (image ref, reason)

    @property
    def ok(self) -> bool:
        return not self.failures


def batch_edit(
    manifest,
    attribute: str,
    inpainter: InpainterBackend,
    cfg: ModConfig | None = None,
    segmenter=None,
    seed: int = 0,
    out_root=None,
    parallel: int = 1,
) -> BatchEditResult:
    """Edit every generation-role entry; per-item failures never stop the batch."""
    cfg = cfg or ModConfig()
    entries = [e for e in manifest.entries if e.role == "generation"]
    out_root = Path(out_root) if out_root is not None else None

    def _one(item):
        idx, entry = item
        img = dataio.load_image(manifest.resolve(entry.image))
        m_seg = resolve_attribute_mask(manifest, entry, attribute, segmenter, seed)
        edited, record = edit_attribute(
            img, m_seg, cfg, inpainter, attribute=attribute, source_id=entry.image
        )
        if out_root is not None:
            stem = Path(entry.image).stem
            # masks live apart from the edited images so the edited folder can
            # be fed straight to aea / eval-edit
            edited_ref = f"edited/{stem}__{attribute}_edited.png"
            raw_ref = f"masks/{stem}__{attribute}_mask_raw.png"
            mod_ref = f"masks/{stem}__{attribute}_mask_mod.png"
            dataio.save_image(out_root / edited_ref, edited)
            dataio.save_mask(out_root / raw_ref, record.mask_raw)
            dataio.save_mask(out_root / mod_ref, record.mask_mod)
            record.edited_ref = edited_ref
            record.mask_raw_ref = raw_ref
            record.mask_mod_ref = mod_ref
        return record

    records, failures = [], []
    items = list(enumerate(entries))
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(_one, item) for item in items]
            for (idx, entry), fut in zip(items, futures):
                try:
                    records.append(fut.result())
                except Exception as exc:  # per-item isolation is the contract
                    failures.append((entry.image, str(exc)))
    else:
        for item in items:
            try:
                records.append(_one(item))
            except Exception as exc:
                failures.append((item[1].image, str(exc)))
    return BatchEditResult(records, failures)
