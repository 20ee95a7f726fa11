import json
import math

import pytest

from sbde.config import RunConfig, config_from_dict, load_config
from sbde.errors import ConfigError


def test_empty_object_gives_all_defaults():
    cfg = config_from_dict({})
    assert cfg == RunConfig()
    assert cfg.tau == 0.25
    assert cfg.mod.open_se.anchor == (0, 0)
    assert cfg.mod.dilate_se.anchor == (1, 1)
    assert cfg.backends["inpaint"] == "harmonic"


def test_negative_tau_is_legal():
    cfg = config_from_dict({"tau": -0.1})
    assert cfg.tau == -0.1


def test_zero_parallel_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"parallel": 0})


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"tua": 0.3})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"mod": {"open": "2x2"}})
    with pytest.raises(ConfigError):
        config_from_dict({"clahe": {"tiles": 8}})


def test_unknown_builtin_backend_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"backends": {"inpaint": "diffusion"}})


def test_url_backends_accepted():
    cfg = config_from_dict({"backends": {"segment": "http://host:1234"}})
    assert cfg.backends["segment"] == "http://host:1234"


def test_clip_limit_inf_spelling():
    cfg = config_from_dict({"clahe": {"clip_limit": "inf"}})
    assert math.isinf(cfg.clahe.clip_limit)
    assert cfg.to_dict()["clahe"]["clip_limit"] == "inf"


def test_config_hash_stable_and_sensitive():
    a = config_from_dict({"seed": 1})
    b = config_from_dict({"seed": 1})
    c = config_from_dict({"seed": 2})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_load_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 7, "policy": "ratio:0.7"}))
    cfg = load_config(path)
    assert cfg.seed == 7 and cfg.policy == "ratio:0.7"


def test_load_config_parse_error(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
