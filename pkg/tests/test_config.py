"""Run configuration: defaults, file parsing, env lookup, validation."""

import dataclasses

import pytest

from rqcsim.config import CONFIG_ENV_VAR, ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0
    assert cfg.max_size_log2 == 28
    assert cfg.n_candidates == 100
    assert cfg.workers == 1
    assert cfg.precision == "single"
    assert cfg.batch_log2 == 13
    assert cfg.resident_log2 == 24
    assert cfg.open_count == 6
    assert cfg.ceiling_m == 20.0
    assert cfg.out_dir == "."


def test_serialize_parse_round_trip():
    cfg = RunConfig(seed=7, max_size_log2=20, precision="mixed", ceiling_m=12.5)
    back = parse_config(cfg.serialize())
    assert back == cfg


def test_save_load_round_trip(tmp_path):
    cfg = RunConfig(workers=4, n_candidates=10)
    path = tmp_path / "run.cfg"
    cfg.save(path)
    assert load_config(path) == cfg


def test_parse_comments_blanks_and_spacing():
    cfg = parse_config("# a comment\n\n  seed = 9  # trailing\nworkers=2\n")
    assert cfg.seed == 9
    assert cfg.workers == 2
    assert cfg.max_size_log2 == 28


def test_parse_unknown_key_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("seed=1\nbogus=3\n")


def test_parse_bad_value_line_number():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("seed=banana\n")
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("seed=1\nworkers=2\nceiling_m=oops\n")


def test_parse_missing_equals():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("seed 1\n")


def test_validation_ranges():
    with pytest.raises(ConfigError):
        RunConfig(max_size_log2=0)
    with pytest.raises(ConfigError):
        RunConfig(max_size_log2=49)
    with pytest.raises(ConfigError):
        RunConfig(n_candidates=0)
    with pytest.raises(ConfigError):
        RunConfig(workers=0)
    with pytest.raises(ConfigError):
        RunConfig(precision="double")
    with pytest.raises(ConfigError):
        RunConfig(ceiling_m=1.0)
    with pytest.raises(ConfigError):
        RunConfig(imbalance=0.6)
    with pytest.raises(ConfigError):
        RunConfig(open_count=-1)


def test_env_var_lookup(tmp_path, monkeypatch):
    path = tmp_path / "env.cfg"
    RunConfig(seed=123).save(path)
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert load_config().seed == 123
    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert load_config() == RunConfig()


def test_explicit_path_beats_env(tmp_path, monkeypatch):
    env_path = tmp_path / "env.cfg"
    RunConfig(seed=1).save(env_path)
    direct = tmp_path / "direct.cfg"
    RunConfig(seed=2).save(direct)
    monkeypatch.setenv(CONFIG_ENV_VAR, str(env_path))
    assert load_config(direct).seed == 2


def test_every_field_survives_round_trip():
    cfg = RunConfig()
    parsed = parse_config(cfg.serialize())
    for f in dataclasses.fields(RunConfig):
        assert getattr(parsed, f.name) == getattr(cfg, f.name)
