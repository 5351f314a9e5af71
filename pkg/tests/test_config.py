import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from jc_sta.config import PRESETS, ConfigError, ExperimentConfig, apply_override, parse_config, set_path


def test_minimal_config_defaults():
    cfg = parse_config("{}")
    assert cfg == ExperimentConfig()
    assert cfg.base_protocol.tau == 5.0 and cfg.measure_r == "e"


def test_error_paths():
    with pytest.raises(ConfigError) as e:
        parse_config({"base_protocol": {"tau": -1}})
    assert e.value.path == "base_protocol.tau"
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"pulse": {"width": 1}})
    with pytest.raises(ConfigError) as e:
        parse_config({"N": 1.5})
    assert e.value.path == "N"
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config("{")
    with pytest.raises(ConfigError, match="n_high"):
        parse_config({"n_low": 0, "n_high": 3})


def test_round_trip():
    for name in PRESETS:
        cfg = parse_config({"preset": name})
        assert parse_config(cfg.to_json()) == cfg


def test_preset_then_explicit_keys_win():
    cfg = parse_config({"preset": "fig2d", "base_protocol": {"tau": 12.0}})
    assert cfg.experiment == "cat" and cfg.base_protocol.tau == 12.0
    assert cfg.base_protocol.lambda_m == 0.25
    with pytest.raises(ConfigError):
        parse_config({"preset": "nope"})


def test_overrides():
    cfg = parse_config({"preset": "fig3"}, ["alpha=1.25", "wigner.resolution=101", "drive=cd"])
    assert (cfg.alpha, cfg.wigner.resolution, cfg.drive) == (1.25, 101, "cd")
    with pytest.raises(ConfigError):
        apply_override({}, "alpha")
    with pytest.raises(ConfigError):
        apply_override({"alpha": 1}, "alpha.x=2")


def test_set_path():
    cfg = set_path(ExperimentConfig(), "base_protocol.tau", 9.0)
    assert cfg.base_protocol.tau == 9.0
    with pytest.raises(ConfigError, match="unknown parameter path"):
        set_path(cfg, "base_protocol.speed", 1)


@given(st.floats(1e-3, 1e3), st.integers(1, 20))
def test_round_trip_property(tau, n):
    cfg = parse_config({"base_protocol": {"tau": tau}, "N": n})
    assert parse_config(json.loads(cfg.to_json())) == cfg
