"""Server configuration loaded from a JSON file.

Example:

    {
      "host": "127.0.0.1",
      "port": 8008,
      "max_image_side": 2048,
      "models": {
        "segment":  {"kind": "builtin-otsu"},
        "inpaint":  {"kind": "torchscript", "path": "weights/inpaint.pt"},
        "classify": {"kind": "builtin-darkblob", "dark_threshold": 120}
      }
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

_KEYS = {"host", "port", "max_image_side", "models"}
_ROLES = {"segment", "inpaint", "classify"}


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    max_image_side: int = 2048
    models: dict = field(default_factory=dict)


def load_server_config(path) -> ServerConfig:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(doc) - _KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    model_specs = doc.get("models", {})
    bad_roles = set(model_specs) - _ROLES
    if bad_roles:
        raise ValueError(f"unknown model roles: {sorted(bad_roles)}")
    return ServerConfig(
        host=str(doc.get("host", "127.0.0.1")),
        port=int(doc.get("port", 8008)),
        max_image_side=int(doc.get("max_image_side", 2048)),
        models=model_specs,
    )
