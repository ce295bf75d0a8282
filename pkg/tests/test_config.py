import json

import pytest

from ecgfit.config import DEFAULTS, ConfigError, RunConfig


def test_builtin_defaults():
    cfg = RunConfig.resolve()
    assert cfg["fs"] == 25.0
    assert cfg.window_s("train") == 25.0 and cfg.window_s("eval") == 60.0
    tc = cfg.train_config()
    assert tc.max_epochs == 1000 and tc.threshold == 0.5
    assert cfg.validation_config().min_purity_db == 0.9


def test_precedence_flags_over_file_over_builtin(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lr": 0.01, "epochs": 5, "validation": {"max_rr_bpm": 50.0}}))
    cfg = RunConfig.resolve(str(path), {"lr": 0.02, "epochs": None})
    assert cfg["lr"] == 0.02          # flag wins
    assert cfg["epochs"] == 5         # file wins over built-in; unset flag ignored
    assert cfg["batch"] == DEFAULTS["batch"]
    v = cfg.validation_config()
    assert v.max_rr_bpm == 50.0 and v.min_purity_db == 0.9


def test_window_override():
    assert RunConfig.resolve().window_s("eval", 30) == 30.0


def test_unknown_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"synth": {"colour": "red"}}))
    with pytest.raises(ConfigError, match="colour"):
        RunConfig.resolve(str(path))


def test_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{\n  'lr': 1\n}")
    with pytest.raises(ConfigError, match="line 2"):
        RunConfig.resolve(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.resolve(str(tmp_path / "nope.json"))


def test_invalid_training_value():
    with pytest.raises(ConfigError):
        RunConfig.resolve(flags={"dropout": 1.5}).train_config()


def test_defaults_not_mutated(tmp_path):
    RunConfig.resolve(flags={"lr": 9.0})
    assert DEFAULTS["lr"] == 1e-3


def test_arch_matches_channels():
    cfg = RunConfig.resolve()
    arch = cfg.arch_config(len(cfg["channels"]))
    assert arch.input_dim == 3 and arch.shared_hidden == (10,)
