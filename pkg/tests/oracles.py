"""Independent reference implementations used only to check the library.

Everything here is written as literally as possible (python sets, scalar
loops) and must stay independent of the code paths under test.
"""

from __future__ import annotations

import numpy as np


# --- morphology as set comprehensions over point sets ---------------------

def mask_points(bits) -> frozenset:
    ys, xs = np.nonzero(np.asarray(bits))
    return frozenset((int(x), int(y)) for x, y in zip(xs, ys))


def points_to_bits(points, w: int, h: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.uint8)
    for x, y in points:
        if 0 <= x < w and 0 <= y < h:
            out[y, x] = 1
    return out


def se_points(se) -> list:
    js, is_ = np.nonzero(np.asarray(se.bits))
    return [(int(i), int(j)) for i, j in zip(is_, js)]


def erode_oracle(bits, se) -> np.ndarray:
    """{o | s translated to o is contained in M}; outside the grid is background."""
    h, w = np.asarray(bits).shape
    m = mask_points(bits)
    ax, ay = se.anchor
    offsets = se_points(se)
    kept = {
        (x, y)
        for x in range(w)
        for y in range(h)
        if all((x + i - ax, y + j - ay) in m for i, j in offsets)
    }
    return points_to_bits(kept, w, h)


def dilate_oracle(bits, se) -> np.ndarray:
    """Minkowski sum {p + (b - anchor) | p in M, b in s}, clipped to the grid."""
    h, w = np.asarray(bits).shape
    ax, ay = se.anchor
    out = {
        (x + i - ax, y + j - ay)
        for x, y in mask_points(bits)
        for i, j in se_points(se)
    }
    return points_to_bits(out, w, h)


def open_oracle(bits, se) -> np.ndarray:
    return dilate_oracle(erode_oracle(bits, se), se)


def mod_oracle(bits, open_se, dilate_se, passes: int = 1) -> np.ndarray:
    out = open_oracle(bits, open_se)
    for _ in range(passes):
        out = dilate_oracle(out, dilate_se)
    return out


# --- global histogram equalization ----------------------------------------

def global_he(px: np.ndarray) -> np.ndarray:
    """Inclusive-cdf equalization, rounded half up."""
    hist = np.bincount(px.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    mapping = np.floor(255.0 * cdf / px.size + 0.5).astype(np.uint8)
    return mapping[px]


# --- scalar point-in-polygon (crossing number) ------------------------------

def point_in_polygon(x: float, y: float, polygon) -> bool:
    inside = False
    n = len(polygon)
    for k in range(n):
        x1, y1 = polygon[k]
        x2, y2 = polygon[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_at:
                inside = not inside
    return inside


def rasterize_oracle(polygon, w: int, h: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            if point_in_polygon(x + 0.5, y + 0.5, polygon):
                out[y, x] = 1
    return out
