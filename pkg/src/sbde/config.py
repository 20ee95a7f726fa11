"""Run configuration: strict JSON loading with defaults.

Unknown keys are fatal on purpose — a typo in a threshold or element size
would otherwise silently change results.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .freqprep import ClaheParams
from .morphmod import ModConfig, StructElement

BUILTIN_BACKENDS = {
    "segment": ("oracle", "threshold"),
    "inpaint": ("harmonic",),
    "classify": ("heuristic",),
}
DEFAULT_BACKENDS = {"segment": "threshold", "inpaint": "harmonic", "classify": "heuristic"}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    backends: dict = field(default_factory=lambda: dict(DEFAULT_BACKENDS))
    mod: ModConfig = field(default_factory=ModConfig)
    clahe: ClaheParams = field(default_factory=ClaheParams)
    tau: float = 0.25
    policy: str = "round_robin"
    parallel: int = 1
    output_root: str = "sbde_out"

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "backends": dict(sorted(self.backends.items())),
            "mod": {
                "open_se": f"{self.mod.open_se.width}x{self.mod.open_se.height}",
                "dilate_se": f"{self.mod.dilate_se.width}x{self.mod.dilate_se.height}",
                "passes": self.mod.dilate_passes,
            },
            "clahe": {
                "tiles_x": self.clahe.tiles_x,
                "tiles_y": self.clahe.tiles_y,
                "clip_limit": "inf" if math.isinf(self.clahe.clip_limit) else self.clahe.clip_limit,
                "bins": self.clahe.bins,
            },
            "tau": self.tau,
            "policy": self.policy,
            "parallel": self.parallel,
            "output_root": self.output_root,
        }


def _check_backend(stage: str, value: str):
    if value.startswith(("http://", "https://")):
        return
    if value not in BUILTIN_BACKENDS[stage]:
        raise ConfigError(
            f"backend for {stage!r} must be a URL or one of {BUILTIN_BACKENDS[stage]}, got {value!r}"
        )


_TOP_KEYS = {"seed", "backends", "mod", "clahe", "tau", "policy", "parallel", "output_root"}
_MOD_KEYS = {"open_se", "dilate_se", "passes"}
_CLAHE_KEYS = {"tiles_x", "tiles_y", "clip_limit", "bins"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    try:
        backends = dict(DEFAULT_BACKENDS)
        raw_backends = doc.get("backends", {})
        if not isinstance(raw_backends, dict):
            raise ConfigError("'backends' must be an object")
        _reject_unknown(raw_backends, set(BUILTIN_BACKENDS), "backends")
        backends.update({k: str(v) for k, v in raw_backends.items()})
        for stage, value in backends.items():
            _check_backend(stage, value)

        mod_doc = doc.get("mod", {})
        if not isinstance(mod_doc, dict):
            raise ConfigError("'mod' must be an object")
        _reject_unknown(mod_doc, _MOD_KEYS, "mod")
        mod = ModConfig(
            open_se=StructElement.from_string(mod_doc.get("open_se", "2x2")),
            dilate_se=StructElement.from_string(mod_doc.get("dilate_se", "3x3")),
            dilate_passes=int(mod_doc.get("passes", 1)),
        )

        clahe_doc = doc.get("clahe", {})
        if not isinstance(clahe_doc, dict):
            raise ConfigError("'clahe' must be an object")
        _reject_unknown(clahe_doc, _CLAHE_KEYS, "clahe")
        clip = clahe_doc.get("clip_limit", 4.0)
        clip = math.inf if clip in ("inf", None) else float(clip)
        clahe = ClaheParams(
            tiles_x=int(clahe_doc.get("tiles_x", 8)),
            tiles_y=int(clahe_doc.get("tiles_y", 8)),
            clip_limit=clip,
            bins=int(clahe_doc.get("bins", 256)),
        )

        cfg = RunConfig(
            seed=int(doc.get("seed", 0)),
            backends=backends,
            mod=mod,
            clahe=clahe,
            tau=float(doc.get("tau", 0.25)),
            policy=str(doc.get("policy", "round_robin")),
            parallel=int(doc.get("parallel", 1)),
            output_root=str(doc.get("output_root", "sbde_out")),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.parallel < 1:
        raise ConfigError("parallel must be >= 1")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(doc)
