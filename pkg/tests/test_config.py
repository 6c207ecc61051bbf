from __future__ import annotations

import pytest

from nlacm.config import ConfigError, RunConfig, load_config, parse_config
from nlacm.gateway import ReplayBackend


def test_defaults_are_valid():
    cfg = load_config(None)
    assert cfg.gateway.backend == "replay" and cfg.deploi.hooks == ["hierarchy-union"]


def test_values_are_coerced(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[gateway]\nparallelism = 8\ntemperature = 0.5\n[deploi]\nhooks = identity, hierarchy-union\n")
    cfg = load_config(path)
    assert cfg.gateway.parallelism == 8 and cfg.gateway.temperature == 0.5
    assert cfg.deploi.hooks == ["identity", "hierarchy-union"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("[gateway]\nmodle = x\n", "unknown key gateway.modle"),
        ("[extras]\nx = 1\n", "unknown section"),
        ("[gateway]\nbackend = magic\n", "backend"),
        ("[gateway]\nparallelism = 0\n", "parallelism"),
        ("[gateway]\nretries = lots\n", "expected a number"),
        ("[deploi]\nhooks = shuffle\n", "unknown revision hooks"),
        ("[catalog]\ndialect = oracle\n", "oracle"),
    ],
)
def test_invalid_configs_are_rejected(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_live_mode_needs_config_and_key(monkeypatch):
    with pytest.raises(ConfigError, match="backend = live"):
        RunConfig().make_gateway(live=True)
    cfg = parse_config("[gateway]\nbackend = live\napi_key_env = NLACM_TEST_KEY\n")
    monkeypatch.delenv("NLACM_TEST_KEY", raising=False)
    with pytest.raises(ConfigError, match="NLACM_TEST_KEY"):
        cfg.make_gateway(live=True)


def test_replay_gateway_is_the_default():
    assert isinstance(RunConfig().make_gateway([]).backend, ReplayBackend)
