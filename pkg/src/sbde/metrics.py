"""Quantitative evaluation: segmentation overlap scores, image-quality
metrics, the focal+dice training loss, attribute-editing accuracy, and the
expert preference score.

Conventions pinned here and relied on by the rest of the toolkit:

* mIoU averages the per-class IoU over {foreground, background}, skipping a
  class whose union is empty (so two empty masks score 1.0 via the background
  class, never an inflated vacuous foreground).
* Dice is reported for the foreground only; for a nonempty union it satisfies
  dice = 2*iou / (1 + iou) exactly.
* PSNR of identical images is the infinity sentinel; reports serialize it as
  the string "inf" because JSON has no infinity.
* SSIM follows the 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
  L=255 formulation on the luma channel, averaging valid windows only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import BallotError, BackendMalformedResponseError, ShapeMismatchError
from .types import LABELS, BinaryMask, RasterImage, luma, require_same_shape


@dataclass(frozen=True)
class SegScores:
    miou: float
    dice: float
    pa: float
    iou_foreground: float | None
    iou_background: float | None

    def as_dict(self) -> dict:
        return {"miou": self.miou, "dice": self.dice, "pa": self.pa}


def seg_metrics(pred: BinaryMask, gt: BinaryMask) -> SegScores:
    """Mean IoU over present classes, foreground Dice, and pixel accuracy."""
    require_same_shape(pred, gt, "pred/gt masks")
    p = pred.bits.astype(bool)
    g = gt.bits.astype(bool)

    ious = []
    iou_fg = iou_bg = None
    inter_fg = int((p & g).sum())
    union_fg = int((p | g).sum())
    if union_fg > 0:
        iou_fg = inter_fg / union_fg
        ious.append(iou_fg)
    inter_bg = int((~p & ~g).sum())
    union_bg = int((~p | ~g).sum())
    if union_bg > 0:
        iou_bg = inter_bg / union_bg
        ious.append(iou_bg)

    denom = int(p.sum()) + int(g.sum())
    dice = 2.0 * inter_fg / denom if denom > 0 else 1.0
    pa = float((p == g).mean())
    return SegScores(float(np.mean(ious)), dice, pa, iou_fg, iou_bg)


PSNR_INF = math.inf


def psnr(a: RasterImage, b: RasterImage) -> float:
    """10*log10(255^2 / MSE) over all samples; math.inf for identical inputs."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(a: RasterImage, b: RasterImage, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local structural similarity on the luma channel."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )
    if min(a.width, a.height) < 11:
        raise ValueError("image too small for the 11x11 SSIM window")
    x = luma(a).pixels.astype(np.float64)
    y = luma(b).pixels.astype(np.float64)
    kernel = _gaussian_kernel()
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2

    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    sxx = _filter_valid(x * x, kernel) - mu_x * mu_x
    syy = _filter_valid(y * y, kernel) - mu_y * mu_y
    sxy = _filter_valid(x * y, kernel) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0       # weight of the focal term
    beta: float = 1.0        # weight of the dice term
    focal_gamma: float = 2.0
    focal_alpha_f: float = 0.25
    dice_eps: float = 1e-6

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.focal_gamma < 0:
            raise ValueError("alpha, beta, focal_gamma must be >= 0")
        if self.dice_eps <= 0:
            raise ValueError("dice_eps must be > 0")


_PROB_CLAMP = 1e-7


def composite_loss(pred_prob: np.ndarray, gt: BinaryMask, cfg: LossConfig | None = None) -> dict:
    """Weighted focal + dice loss of a probability map against a binary mask.

    focal = mean over pixels of -alpha_f * (1 - p_t)^gamma * ln(p_t), where
    p_t is the predicted probability of the true class, clamped to
    [1e-7, 1 - 1e-7]; dice = 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
    """
    cfg = cfg or LossConfig()
    p = np.asarray(pred_prob, dtype=np.float64)
    if p.shape != gt.bits.shape:
        raise ShapeMismatchError(f"probability grid {p.shape} vs mask {gt.bits.shape}")
    if p.min(initial=0.0) < 0.0 or p.max(initial=0.0) > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    g = gt.bits.astype(np.float64)

    p_t = np.where(g > 0, p, 1.0 - p).clip(_PROB_CLAMP, 1.0 - _PROB_CLAMP)
    focal = float(np.mean(-cfg.focal_alpha_f * (1.0 - p_t) ** cfg.focal_gamma * np.log(p_t)))
    dice = float(1.0 - (2.0 * (p * g).sum() + cfg.dice_eps) / (p.sum() + g.sum() + cfg.dice_eps))
    return {"total": cfg.alpha * focal + cfg.beta * dice, "focal": focal, "dice": dice}


def compute_aea(preds: Sequence[str], target: str) -> float:
    """Percentage of predictions that hit the intended defect label."""
    if not preds:
        raise ValueError("need at least one prediction")
    if target not in LABELS:
        raise ValueError(f"unknown target label {target!r}")
    hits = sum(1 for p in preds if p == target)
    return 100.0 * hits / len(preds)


@dataclass(frozen=True)
class HpsBallot:
    """One expert's ranking of the edit configurations for one image group.

    ``scores`` maps config id -> rank score; the scores must be a permutation
    of 1..M where M is the number of configs on the ballot.
    """

    expert: str
    image: str
    scores: Mapping[str, int]

    def validate(self, n_configs: int | None = None):
        vals = sorted(self.scores.values())
        m = len(vals)
        if n_configs is not None and m != n_configs:
            raise BallotError(
                f"ballot ({self.expert}, {self.image}) covers {m} configs, expected {n_configs}"
            )
        if vals != list(range(1, m + 1)):
            raise BallotError(
                f"ballot ({self.expert}, {self.image}) scores {vals} are not a permutation of 1..{m}"
            )


def compute_hps(ballots: Sequence[HpsBallot], config: str) -> float:
    """Mean rank score of one configuration over the expert x image grid."""
    if not ballots:
        raise BallotError("no ballots")
    n_configs = len(ballots[0].scores)
    seen = set()
    for b in ballots:
        b.validate(n_configs)
        if config not in b.scores:
            raise BallotError(f"ballot ({b.expert}, {b.image}) does not cover config {config!r}")
        key = (b.expert, b.image)
        if key in seen:
            raise BallotError(f"duplicate ballot for {key}")
        seen.add(key)
    experts = {b.expert for b in ballots}
    images = {b.image for b in ballots}
    n, k = len(experts), len(images)
    if n * k != len(ballots):
        raise BallotError(
            f"incomplete grid: {len(ballots)} ballots for {n} experts x {k} images"
        )
    return sum(b.scores[config] for b in ballots) / (n * k)


class ClassifierBackend(Protocol):
    """Defect classifier: exactly one label plus scores summing to 1."""

    def classify(self, img: RasterImage) -> tuple[str, dict[str, float]]: ...

    def descriptor(self) -> dict: ...


@dataclass(frozen=True)
class Zone:
    """Axis-aligned region (half-open box) inspected for a dark attribute blob."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def clip(self, w: int, h: int) -> tuple[int, int, int, int]:
        return (max(0, self.x_min), max(0, self.y_min), min(w, self.x_max), min(h, self.y_max))


class HeuristicClassifier:
    """Deterministic rule-based classifier for synthetic fastener fixtures.

    An attribute (pin or nut) counts as present when the fraction of dark
    pixels (luma < ``dark_threshold``) inside its zone exceeds
    ``min_fraction``. Both present -> normal; a single missing attribute
    names the defect; if both are missing, the attribute with the smaller
    dark fraction is reported (tie broken toward the pin).
    """

    def __init__(
        self,
        pin_zone: Zone,
        nut_zone: Zone,
        dark_threshold: int = 120,
        min_fraction: float = 0.02,
    ):
        self.pin_zone = pin_zone
        self.nut_zone = nut_zone
        self.dark_threshold = dark_threshold
        self.min_fraction = min_fraction

    def _dark_fraction(self, gray: np.ndarray, zone: Zone) -> float:
        x0, y0, x1, y1 = zone.clip(gray.shape[1], gray.shape[0])
        if x0 >= x1 or y0 >= y1:
            return 0.0
        region = gray[y0:y1, x0:x1]
        return float((region < self.dark_threshold).mean())

    def classify(self, img: RasterImage) -> tuple[str, dict[str, float]]:
        gray = luma(img).pixels
        pin_frac = self._dark_fraction(gray, self.pin_zone)
        nut_frac = self._dark_fraction(gray, self.nut_zone)
        pin_present = pin_frac > self.min_fraction
        nut_present = nut_frac > self.min_fraction
        if pin_present and nut_present:
            label = "normal"
        elif nut_present:
            label = "pin_losing"
        elif pin_present:
            label = "nut_losing"
        else:
            label = "pin_losing" if pin_frac <= nut_frac else "nut_losing"

        # margin-style raw scores, normalized to sum exactly to 1
        raw = {
            "normal": min(pin_frac, nut_frac),
            "pin_losing": max(0.0, nut_frac - pin_frac),
            "nut_losing": max(0.0, pin_frac - nut_frac),
        }
        raw[label] += self.min_fraction  # ensure the winner carries weight
        total = sum(raw.values())
        scores = {k: v / total for k, v in raw.items()}
        return label, scores

    def descriptor(self) -> dict:
        return {
            "name": "heuristic",
            "remote": False,
            "params": {
                "pin_zone": [self.pin_zone.x_min, self.pin_zone.y_min,
                             self.pin_zone.x_max, self.pin_zone.y_max],
                "nut_zone": [self.nut_zone.x_min, self.nut_zone.y_min,
                             self.nut_zone.x_max, self.nut_zone.y_max],
                "dark_threshold": self.dark_threshold,
                "min_fraction": self.min_fraction,
            },
        }


def classify(backend: ClassifierBackend, img: RasterImage) -> tuple[str, dict[str, float]]:
    """Run a classifier backend and enforce its output contract."""
    label, scores = backend.classify(img)
    if label not in LABELS:
        raise BackendMalformedResponseError(f"classifier returned unknown label {label!r}")
    if set(scores) != set(LABELS):
        raise BackendMalformedResponseError("classifier scores must cover exactly the three labels")
    if abs(sum(scores.values()) - 1.0) > 1e-6:
        raise BackendMalformedResponseError("classifier scores must sum to 1 within 1e-6")
    return label, scores
