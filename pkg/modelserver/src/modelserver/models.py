"""Model registry: builtin deterministic models plus TorchScript adapters.

Every model exposes a stable content fingerprint: sha256 of the weights file
for TorchScript models, sha256 of the parameter blob for builtin ones. The
builtin models are self-contained classical algorithms so the server runs
(and the protocol can be exercised) with no weights on disk at all.

TorchScript tensor conventions (documented contract for exported models):

* segment:  input  (1, C+2, H, W) float32 — image channels scaled to [0,1],
            then a positive-point heatmap plane and a negative-point plane
            (1.0 at prompt pixels); output (1, 1, H, W) logits, mask = >0.
* inpaint:  inputs (1, 3, H, W) image in [0,1] and (1, 1, H, W) mask;
            output (1, 3, H, W) in [0,1].
* classify: input  (1, 3, H, W) in [0,1]; output (1, 3) logits ordered
            (normal, pin_losing, nut_losing); scores are their softmax.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

LABELS = ("normal", "pin_losing", "nut_losing")
PARTS = ("pin0", "pin1", "pin2", "nut")
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def _params_fingerprint(kind: str, params: dict) -> str:
    blob = json.dumps({"kind": kind, **params}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _file_fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img.astype(np.float64)
    p = img.astype(np.float64)
    return 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]


class OtsuFloodSegmenter:
    """Otsu split, then the connected components holding the positive points."""

    kind = "builtin-otsu"

    def __init__(self):
        self.fingerprint = _params_fingerprint(self.kind, {"connectivity": 4})

    def segment(self, img: np.ndarray, part: str, points, seed: int) -> np.ndarray:
        gray = _to_gray(img)
        hist, _ = np.histogram(gray, bins=256, range=(0, 256))
        total = hist.sum()
        omega = np.cumsum(hist) / total
        mu = np.cumsum(hist * np.arange(256)) / total
        with np.errstate(divide="ignore", invalid="ignore"):
            sigma = (mu[-1] * omega - mu) ** 2 / (omega * (1 - omega))
        sigma[~np.isfinite(sigma)] = 0.0
        threshold = int(np.argmax(sigma))

        out = np.zeros(gray.shape, dtype=np.uint8)
        for side in (gray <= threshold, gray > threshold):
            labels, _n = ndimage.label(side, structure=_CROSS)
            keep = {labels[p["y"], p["x"]] for p in points if p["positive"] and side[p["y"], p["x"]]}
            drop = {labels[p["y"], p["x"]] for p in points if not p["positive"] and side[p["y"], p["x"]]}
            for lab in keep - drop:
                out[labels == lab] = 1
        return out


class LaplaceInpainter:
    """Direct sparse solve of the masked Laplace system (Dirichlet data from
    the unmasked pixels; components with no data fill with mid-gray)."""

    kind = "builtin-laplace"

    def __init__(self):
        self.fingerprint = _params_fingerprint(self.kind, {"fallback": 128})

    def _solve_plane(self, plane: np.ndarray, mask: np.ndarray) -> np.ndarray:
        h, w = plane.shape
        out = plane.astype(np.float64)
        solvable = mask.astype(bool)

        # strip components with no boundary data (pure-Neumann blocks)
        labels, n = ndimage.label(mask, structure=_CROSS)
        for lab in range(1, n + 1):
            comp = labels == lab
            ring = ndimage.binary_dilation(comp, structure=_CROSS) & ~mask.astype(bool)
            if not ring.any():
                out[comp] = 128.0
                solvable[comp] = False

        ys, xs = np.nonzero(solvable)
        if len(ys) == 0:
            return out
        index = -np.ones((h, w), dtype=np.int64)
        index[ys, xs] = np.arange(len(ys))

        rows, cols, vals = [], [], []
        rhs = np.zeros(len(ys))
        for k, (y, x) in enumerate(zip(ys, xs)):
            degree = 0
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w):
                    continue
                degree += 1
                j = index[ny, nx]
                if j >= 0:
                    rows.append(k)
                    cols.append(j)
                    vals.append(-1.0)
                else:
                    rhs[k] += out[ny, nx]
            rows.append(k)
            cols.append(k)
            vals.append(float(degree))
        matrix = coo_matrix((vals, (rows, cols)), shape=(len(ys), len(ys))).tocsr()
        out[ys, xs] = spsolve(matrix, rhs)
        return out

    def inpaint(self, img: np.ndarray, mask: np.ndarray) -> np.ndarray:
        planes = [img] if img.ndim == 2 else [img[:, :, c] for c in range(3)]
        solved = [self._solve_plane(p, mask) for p in planes]
        merged = solved[0] if img.ndim == 2 else np.stack(solved, axis=2)
        result = img.copy()
        sel = mask.astype(bool)
        result[sel] = np.floor(merged + 0.5).clip(0, 255).astype(np.uint8)[sel]
        return result


class DarkBlobClassifier:
    """Halves-based attribute presence: dark fraction in the top half reads
    the pin, in the bottom half the nut."""

    kind = "builtin-darkblob"

    def __init__(self, dark_threshold: int = 120, min_fraction: float = 0.02):
        self.dark_threshold = dark_threshold
        self.min_fraction = min_fraction
        self.fingerprint = _params_fingerprint(
            self.kind, {"dark_threshold": dark_threshold, "min_fraction": min_fraction}
        )

    def classify(self, img: np.ndarray) -> tuple[str, dict]:
        gray = _to_gray(img)
        half = gray.shape[0] // 2
        top = float((gray[:half] < self.dark_threshold).mean()) if half else 0.0
        bottom = float((gray[half:] < self.dark_threshold).mean())
        pin_present = top > self.min_fraction
        nut_present = bottom > self.min_fraction
        if pin_present and nut_present:
            label = "normal"
        elif nut_present:
            label = "pin_losing"
        elif pin_present:
            label = "nut_losing"
        else:
            label = "pin_losing" if top <= bottom else "nut_losing"
        raw = {
            "normal": min(top, bottom),
            "pin_losing": max(0.0, bottom - top),
            "nut_losing": max(0.0, top - bottom),
        }
        raw[label] += self.min_fraction
        total = sum(raw.values())
        return label, {k: v / total for k, v in raw.items()}


def _lazy_torch():
    import torch  # deferred: only torchscript-configured servers pay for it

    return torch


class TorchScriptSegmenter:
    kind = "torchscript"

    def __init__(self, path: str):
        torch = _lazy_torch()
        self.path = Path(path)
        self.module = torch.jit.load(str(self.path), map_location="cpu").eval()
        self.fingerprint = _file_fingerprint(self.path)

    def segment(self, img: np.ndarray, part: str, points, seed: int) -> np.ndarray:
        torch = _lazy_torch()
        h, w = img.shape[:2]
        chans = img.astype(np.float32) / 255.0
        if chans.ndim == 2:
            chans = chans[:, :, None]
        pos = np.zeros((h, w), dtype=np.float32)
        neg = np.zeros((h, w), dtype=np.float32)
        for p in points:
            (pos if p["positive"] else neg)[p["y"], p["x"]] = 1.0
        stack = np.concatenate([chans, pos[:, :, None], neg[:, :, None]], axis=2)
        tensor = torch.from_numpy(stack.transpose(2, 0, 1))[None]
        with torch.no_grad():
            logits = self.module(tensor)
        return (logits[0, 0].numpy() > 0).astype(np.uint8)


class TorchScriptInpainter:
    kind = "torchscript"

    def __init__(self, path: str):
        torch = _lazy_torch()
        self.path = Path(path)
        self.module = torch.jit.load(str(self.path), map_location="cpu").eval()
        self.fingerprint = _file_fingerprint(self.path)

    def inpaint(self, img: np.ndarray, mask: np.ndarray) -> np.ndarray:
        torch = _lazy_torch()
        rgb = img if img.ndim == 3 else np.repeat(img[:, :, None], 3, axis=2)
        image_t = torch.from_numpy(rgb.astype(np.float32).transpose(2, 0, 1) / 255.0)[None]
        mask_t = torch.from_numpy(mask.astype(np.float32))[None, None]
        with torch.no_grad():
            out = self.module(image_t, mask_t)
        arr = (out[0].numpy().transpose(1, 2, 0).clip(0, 1) * 255.0)
        arr = np.floor(arr + 0.5).astype(np.uint8)
        return arr if img.ndim == 3 else arr[:, :, 0]


class TorchScriptClassifier:
    kind = "torchscript"

    def __init__(self, path: str):
        torch = _lazy_torch()
        self.path = Path(path)
        self.module = torch.jit.load(str(self.path), map_location="cpu").eval()
        self.fingerprint = _file_fingerprint(self.path)

    def classify(self, img: np.ndarray) -> tuple[str, dict]:
        torch = _lazy_torch()
        rgb = img if img.ndim == 3 else np.repeat(img[:, :, None], 3, axis=2)
        tensor = torch.from_numpy(rgb.astype(np.float32).transpose(2, 0, 1) / 255.0)[None]
        with torch.no_grad():
            logits = self.module(tensor)[0].numpy().astype(np.float64)
        shifted = np.exp(logits - logits.max())
        probs = shifted / shifted.sum()
        label = LABELS[int(np.argmax(probs))]
        return label, dict(zip(LABELS, (float(p) for p in probs)))


_BUILTINS = {
    "segment": {"builtin-otsu": OtsuFloodSegmenter},
    "inpaint": {"builtin-laplace": LaplaceInpainter},
    "classify": {"builtin-darkblob": DarkBlobClassifier},
}
_TORCHSCRIPT = {
    "segment": TorchScriptSegmenter,
    "inpaint": TorchScriptInpainter,
    "classify": TorchScriptClassifier,
}


@dataclass
class Registry:
    segment: object
    inpaint: object
    classify: object

    def fingerprints(self) -> dict:
        return {
            "segment": self.segment.fingerprint,
            "inpaint": self.inpaint.fingerprint,
            "classify": self.classify.fingerprint,
        }


def build_model(role: str, spec: dict):
    kind = spec.get("kind", f"builtin-{'otsu' if role == 'segment' else 'laplace' if role == 'inpaint' else 'darkblob'}")
    if kind == "torchscript":
        path = spec.get("path")
        if not path or not Path(path).exists():
            raise FileNotFoundError(f"{role}: torchscript weights not resolvable: {path!r}")
        return _TORCHSCRIPT[role](path)
    builders = _BUILTINS[role]
    if kind not in builders:
        raise ValueError(f"{role}: unknown model kind {kind!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    return builders[kind](**params)


def load_registry(model_specs: dict | None = None) -> Registry:
    specs = model_specs or {}
    return Registry(
        segment=build_model("segment", specs.get("segment", {})),
        inpaint=build_model("inpaint", specs.get("inpaint", {})),
        classify=build_model("classify", specs.get("classify", {})),
    )
