import pytest

from starksense.config import (PRESETS, ConfigError, RunConfig, config_hash, dumps, from_dict, loads, preset,
                               with_overrides)

REQUIRED_PRESETS = {"fig2a", "fig3e", "fig4_k5", "fig5d", "sm_s6", "sm_s7"}


def test_required_presets_exist():
    assert REQUIRED_PRESETS <= set(PRESETS)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip_idempotent(name):
    cfg = preset(name)
    text = dumps(cfg)
    again = loads(text)
    assert again == cfg
    assert dumps(again) == text


def test_defaults_are_recorded():
    cfg = from_dict({})
    assert isinstance(cfg, RunConfig) and cfg.seed == 20240501
    assert "seed = 20240501" in dumps(cfg)


def test_range_tables_and_overrides():
    cfg = loads("""
        preset = "fig3e"
        seed = 7
        times = {start = 0, stop = 20, step = 5}
        [estimate]
        true_h = {start = -3, stop = -1, step = 1}
        grid = {start = -5, stop = 0, step = 0.5}
        protocols = [{name = "two", times = [80, 100]}]
    """)
    assert cfg.times == (0.0, 5.0, 10.0, 15.0, 20.0)
    assert cfg.estimate.true_h == (-3.0, -2.0, -1.0)
    assert cfg.estimate.grid == (-5.0, 0.0, 0.5)
    assert cfg.estimate.protocols[0].times == (80.0, 100.0)
    assert cfg.estimate.M == 60 and cfg.command == "estimate" and cfg.seed == 7
    assert loads(dumps(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "[model]\nL = 'nine'",
    "[model]\nL = 3\nk = 4",
    "[model]\nk = 1\ninitial = [12]",
    "[model]\nL = 5\n[decoherence]\nmode = 'per_qubit'",
    "[decoherence]\nmode = 'gaussian'",
    "[estimate]\nlikelihood = 'psychic'",
    "[estimate]\nprotocols = [{name = 'a', times = [1]}, {name = 'a', times = [2]}]",
    "[estimate]\nM = -1",
    "[estimate]\ngrid = [0, -1, 0.1]",
    "[scaling]\ngroups = 1",
    "[fisher]\neps = 0.0",
    "[model]\nnope = 1",
    "seed = -4",
    "command = 'plot'",
    "preset = 'fig99'",
    "times = [5, 1]",
    "this is not toml",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_hash_ignores_runtime_fields():
    cfg = preset("fig3e")
    assert config_hash(cfg) == config_hash(with_overrides(cfg, threads=4, out="elsewhere"))
    assert config_hash(cfg) != config_hash(with_overrides(cfg, seed=1))
    with pytest.raises(ConfigError):
        with_overrides(cfg, threads=0)
