"""Core pixel-grid types shared by every stage.

``RasterImage`` and ``BinaryMask`` wrap numpy arrays and freeze them after
construction; everything downstream treats them as immutable values, which is
what makes per-image parallelism safe without locks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

LABELS = ("normal", "pin_losing", "nut_losing")
DEFECT_LABELS = ("pin_losing", "nut_losing")
PARTS = ("pin0", "pin1", "pin2", "nut")
ATTRIBUTES = ("pin", "nut")
# parts segmented per attribute; the pin is handled as three sub-parts
ATTRIBUTE_PARTS = {"pin": ("pin0", "pin1", "pin2"), "nut": ("nut",)}


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit grayscale or RGB pixel grid, row-major."""

    pixels: np.ndarray  # uint8, (h, w) or (h, w, 3)

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.uint8:
            raise TypeError("pixels must be a uint8 ndarray")
        if p.ndim == 2:
            pass
        elif p.ndim == 3 and p.shape[2] == 3:
            pass
        else:
            raise ValueError(f"unsupported pixel shape {p.shape}; need (h,w) or (h,w,3)")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "pixels", _freeze(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel {0,1} grid aligned to a RasterImage."""

    bits: np.ndarray  # uint8 in {0,1}, (h, w)

    def __post_init__(self):
        b = self.bits
        if not isinstance(b, np.ndarray) or b.ndim != 2:
            raise TypeError("bits must be a 2-D ndarray")
        if b.dtype != np.uint8:
            b = b.astype(np.uint8)
        if b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError("mask must be at least 1x1")
        if b.max(initial=0) > 1:
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _freeze(b))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.array_equal(self.bits, other.bits)
        )

    __hash__ = None


def require_same_shape(a, b, what: str = "grids"):
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(
            f"{what} differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def luma(img: RasterImage) -> RasterImage:
    """BT.601 luma conversion; grayscale images pass through unchanged."""
    if img.channels == 1:
        return img
    p = img.pixels.astype(np.float64)
    y = 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]
    return RasterImage(np.floor(y + 0.5).clip(0, 255).astype(np.uint8))
