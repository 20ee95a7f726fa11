"""Frequency-domain preprocessing: contrast-limited adaptive histogram
equalization, a centered unitary FFT pair, the product high-pass mask, and the
small adapter forward pass that projects features through a GELU bottleneck.

The high-pass mask keeps bin (i, j) only when

    4 * |(i - H/2) * (j - W/2)| / (H * W) > tau

with H/2 and W/2 taken as exact real halves, so at tau = 1 every bin is
rejected (the corner attains the maximum, exactly 1) and at tau < 0 every bin
passes. The spectrum is center-shifted before masking so the zero-frequency
bin sits at (floor(H/2), floor(W/2)) where the mask's zero region lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ShapeMismatchError
from .types import RasterImage


@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_limit: float = 4.0  # multiple of the uniform bin height; math.inf = no clipping
    bins: int = 256

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be >= 1")
        if self.clip_limit < 1.0:
            raise ValueError("clip_limit must be >= 1.0")
        if self.bins not in (64, 128, 256):
            raise ValueError("bins must be one of 64, 128, 256")


@dataclass(frozen=True, eq=False)
class FreqGrid:
    """Center-shifted complex spectrum of an equally sized image."""

    values: np.ndarray  # complex128, (h, w); DC at (h//2, w//2)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.ndim != 2:
            raise ValueError("spectrum must be 2-D")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class HpfMask:
    """{0,1} frequency mask; 0 marks the rejected low-frequency region."""

    bits: np.ndarray  # uint8, (h, w)
    tau: float

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def zero_count(self) -> int:
        return int((self.bits == 0).sum())


@dataclass(frozen=True)
class AdapterParams:
    """Two-layer projection weights: (d_in x d_mid) tune, (d_mid x d_out) up."""

    w_tune: np.ndarray
    b_tune: np.ndarray
    w_up: np.ndarray
    b_up: np.ndarray

    def __post_init__(self):
        for name in ("w_tune", "b_tune", "w_up", "b_up"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        if self.w_tune.ndim != 2 or self.w_up.ndim != 2:
            raise ValueError("weight matrices must be 2-D")
        d_mid = self.w_tune.shape[1]
        if self.b_tune.shape != (d_mid,):
            raise ValueError("b_tune does not match w_tune output width")
        if self.w_up.shape[0] != d_mid:
            raise ValueError("w_up input width does not chain from w_tune")
        if self.b_up.shape != (self.w_up.shape[1],):
            raise ValueError("b_up does not match w_up output width")


def _grayscale_f64(img: RasterImage) -> np.ndarray:
    if img.channels != 1:
        raise ValueError("operation requires a grayscale image; convert via luma first")
    return img.pixels.astype(np.float64)


def _tile_edges(size: int, tiles: int) -> np.ndarray:
    # floor(k * size / tiles): covers the image exactly, no padding
    return np.array([(k * size) // tiles for k in range(tiles + 1)], dtype=np.int64)


def _tile_mapping(tile: np.ndarray, bins: int, clip_limit: float) -> np.ndarray:
    """Clipped-histogram equalization mapping for one tile: bin -> gray."""
    n = tile.size
    binned = (tile.astype(np.int64) * bins) >> 8
    hist = np.bincount(binned.ravel(), minlength=bins)
    if math.isfinite(clip_limit):
        cap = max(1, int(clip_limit * n / bins))
        excess = int(np.maximum(hist - cap, 0).sum())
        hist = np.minimum(hist, cap)
        # one redistribution pass; the remainder goes to the lowest bins
        hist += excess // bins
        rem = excess % bins
        if rem:
            hist[:rem] += 1
    cdf = np.cumsum(hist)
    return np.floor(255.0 * cdf / n + 0.5)


def clahe(img: RasterImage, p: ClaheParams | None = None) -> RasterImage:
    """Contrast-limited adaptive histogram equalization on a grayscale image.

    Each tile gets a clipped-histogram equalization mapping; each pixel is
    remapped by bilinear interpolation between the four tile mappings whose
    centers surround it (clamped past the outermost centers). With one tile
    and an infinite clip limit this is exactly global histogram equalization.
    """
    p = p or ClaheParams()
    gray = img.pixels if img.channels == 1 else None
    if gray is None:
        raise ValueError("clahe requires a grayscale image; convert via luma first")
    h, w = gray.shape
    if p.tiles_x > w or p.tiles_y > h:
        raise ValueError(f"tile grid {p.tiles_x}x{p.tiles_y} exceeds image {w}x{h}")

    xe = _tile_edges(w, p.tiles_x)
    ye = _tile_edges(h, p.tiles_y)
    maps = np.empty((p.tiles_y, p.tiles_x, p.bins), dtype=np.float64)
    for ty in range(p.tiles_y):
        for tx in range(p.tiles_x):
            tile = gray[ye[ty]:ye[ty + 1], xe[tx]:xe[tx + 1]]
            maps[ty, tx] = _tile_mapping(tile, p.bins, p.clip_limit)

    cx = (xe[:-1] + xe[1:]) / 2.0  # tile centers
    cy = (ye[:-1] + ye[1:]) / 2.0
    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5

    def _axis_blend(coords, centers):
        lo = np.clip(np.searchsorted(centers, coords) - 1, 0, len(centers) - 1)
        hi = np.clip(lo + 1, 0, len(centers) - 1)
        span = centers[hi] - centers[lo]
        t = np.where(span > 0, (coords - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
        return lo, hi, np.clip(t, 0.0, 1.0)

    x0, x1, tx = _axis_blend(px, cx)
    y0, y1, ty = _axis_blend(py, cy)

    binned = (gray.astype(np.int64) * p.bins) >> 8
    out = np.empty((h, w), dtype=np.float64)
    for row in range(h):
        b = binned[row]
        top = maps[y0[row], x0, b] * (1 - tx) + maps[y0[row], x1, b] * tx
        bot = maps[y1[row], x0, b] * (1 - tx) + maps[y1[row], x1, b] * tx
        out[row] = top * (1 - ty[row]) + bot * ty[row]
    return RasterImage(np.floor(out + 0.5).clip(0, 255).astype(np.uint8))


def fft2_centered(img: RasterImage | np.ndarray) -> FreqGrid:
    """Unitary 2-D FFT with the spectrum shifted so DC sits at the center bin."""
    arr = _grayscale_f64(img) if isinstance(img, RasterImage) else np.asarray(img, dtype=np.float64)
    return FreqGrid(np.fft.fftshift(np.fft.fft2(arr, norm="ortho")))


def ifft2_centered(g: FreqGrid) -> np.ndarray:
    """Inverse of :func:`fft2_centered`; returns the real part as float64."""
    return np.fft.ifft2(np.fft.ifftshift(g.values), norm="ortho").real


def build_hpf_mask(h: int, w: int, tau: float) -> HpfMask:
    """Evaluate the low-frequency rejection predicate at every bin."""
    if h < 1 or w < 1:
        raise ValueError("mask sides must be >= 1")
    i = np.arange(h, dtype=np.float64)[:, None] - h / 2.0
    j = np.arange(w, dtype=np.float64)[None, :] - w / 2.0
    low = 4.0 * np.abs(i * j) / (h * w) <= tau
    return HpfMask(np.where(low, 0, 1).astype(np.uint8), float(tau))


def high_freq_component(
    img: RasterImage,
    p: ClaheParams | None = None,
    tau: float = 0.25,
    enhance: bool = True,
) -> np.ndarray:
    """High-frequency residual of the (optionally CLAHE-enhanced) image.

    Returns signed float64 values (no re-quantization) suitable for adding to
    feature embeddings. ``enhance=False`` bypasses CLAHE, which makes the
    whole map linear in the input.
    """
    base = clahe(img, p) if enhance else img
    spec = fft2_centered(base)
    mask = build_hpf_mask(spec.height, spec.width, tau)
    return ifft2_centered(FreqGrid(spec.values * mask.bits))


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact erf-based GELU (not the tanh approximation)."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def adapter_forward(f: np.ndarray, p: AdapterParams) -> np.ndarray:
    """Per-vector ``w_up . gelu(w_tune . f + b_tune) + b_up``.

    ``f`` is one vector of length d_in or a batch shaped (n, d_in).
    """
    f = np.asarray(f, dtype=np.float64)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[None, :]
    if f.ndim != 2 or f.shape[1] != p.w_tune.shape[0]:
        raise ShapeMismatchError(
            f"feature width {f.shape[-1] if f.ndim else '?'} does not match "
            f"adapter input {p.w_tune.shape[0]}"
        )
    mid = gelu(f @ p.w_tune + p.b_tune)
    out = mid @ p.w_up + p.b_up
    return out[0] if squeeze else out
