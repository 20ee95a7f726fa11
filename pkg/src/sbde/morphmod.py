"""Binary-mask morphology: erosion, dilation, opening, and the mask
optimization pass (opening to kill segmentation noise, then dilation to grow
inpainting context).

Semantics are the classical set definitions with an explicit anchor:

  erode(m, s)(x, y)  = 1  iff  for every set bit (i, j) of s,
                               m(x + i - ax, y + j - ay) = 1
  dilate(m, s)(x, y) = 1  iff  some set bit (i, j) of s satisfies
                               m(x - (i - ax), y - (j - ay)) = 1

i.e. dilation reflects the element through its anchor (Minkowski sum), so
opening is anti-extensive for any anchor. Samples outside the mask count as
background. The implementation is the naive shifted-AND/OR definition
vectorized over numpy; any future fast path must stay bit-identical to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import BinaryMask


@dataclass(frozen=True, eq=False)
class StructElement:
    """Small binary kernel with an explicit anchor (ax, ay)."""

    bits: np.ndarray  # uint8 {0,1}, shape (height, width); bits[j, i] = bit (i, j)
    anchor: tuple[int, int]

    def __post_init__(self):
        b = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if b.ndim != 2 or b.max(initial=0) > 1:
            raise ValueError("element bits must be a 2-D {0,1} grid")
        if not b.any():
            raise ValueError("element must have at least one set bit")
        ax, ay = self.anchor
        if not (0 <= ax < b.shape[1] and 0 <= ay < b.shape[0]):
            raise ValueError(f"anchor {self.anchor} outside element {b.shape[1]}x{b.shape[0]}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "anchor", (int(ax), int(ay)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def offsets(self) -> list[tuple[int, int]]:
        """Set bits as (i, j) = (column, row) pairs."""
        js, is_ = np.nonzero(self.bits)
        return [(int(i), int(j)) for i, j in zip(is_, js)]

    @classmethod
    def rect(cls, width: int, height: int) -> "StructElement":
        """All-ones element anchored at the floor-center ((w-1)//2, (h-1)//2).

        For odd sizes that is the true center; even sizes have no center and
        anchor at the top-left quadrant corner (2x2 -> (0, 0)).
        """
        if width < 1 or height < 1:
            raise ValueError("element sides must be >= 1")
        return cls(np.ones((height, width), dtype=np.uint8), ((width - 1) // 2, (height - 1) // 2))

    @classmethod
    def from_string(cls, text: str) -> "StructElement":
        """Parse "WxH" into an all-ones rect element."""
        try:
            w, h = (int(part) for part in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"bad element spec {text!r}; expected like '3x3'") from None
        return cls.rect(w, h)

    def __eq__(self, other):
        if not isinstance(other, StructElement):
            return NotImplemented
        return self.anchor == other.anchor and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None


@dataclass(frozen=True)
class ModConfig:
    """Mask-optimization parameters: opening element, dilation element, passes."""

    open_se: StructElement = field(default_factory=lambda: StructElement.rect(2, 2))
    dilate_se: StructElement = field(default_factory=lambda: StructElement.rect(3, 3))
    dilate_passes: int = 1

    def __post_init__(self):
        if self.dilate_passes < 1:
            raise ValueError("dilate_passes must be >= 1")


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[..., y, x] = a[..., y - dy, x - dx], zero outside."""
    h, w = a.shape[-2:]
    out = np.zeros_like(a)
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[..., ys, xs] = a[..., ys_src, xs_src]
    return out


def erode_bits(bits: np.ndarray, se: StructElement) -> np.ndarray:
    ax, ay = se.anchor
    out = np.ones_like(bits)
    for i, j in se.offsets():
        out &= _shift(bits, ay - j, ax - i)
    return out


def dilate_bits(bits: np.ndarray, se: StructElement) -> np.ndarray:
    ax, ay = se.anchor
    out = np.zeros_like(bits)
    for i, j in se.offsets():
        out |= _shift(bits, j - ay, i - ax)
    return out


def erode(m: BinaryMask, s: StructElement) -> BinaryMask:
    """Shrink foreground: keep pixels whose whole element window is set."""
    return BinaryMask(erode_bits(m.bits, s))


def dilate(m: BinaryMask, s: StructElement) -> BinaryMask:
    """Grow foreground: set pixels whose reflected element touches the mask."""
    return BinaryMask(dilate_bits(m.bits, s))


def opening(m: BinaryMask, s: StructElement) -> BinaryMask:
    """Erosion followed by dilation with the same element; removes specks."""
    return BinaryMask(dilate_bits(erode_bits(m.bits, s), s))


def closing(m: BinaryMask, s: StructElement) -> BinaryMask:
    """Dilation followed by erosion with the same element; bridges small gaps."""
    return BinaryMask(erode_bits(dilate_bits(m.bits, s), s))


def mod_optimize(m_seg: BinaryMask, cfg: ModConfig | None = None) -> BinaryMask:
    """Opening then ``dilate_passes`` dilations: denoise, then expand context."""
    cfg = cfg or ModConfig()
    bits = dilate_bits(erode_bits(m_seg.bits, cfg.open_se), cfg.open_se)
    for _ in range(cfg.dilate_passes):
        bits = dilate_bits(bits, cfg.dilate_se)
    return BinaryMask(bits)
