import pytest

from trlab import config
from trlab.errors import ConfigError


def test_defaults_are_consistent():
    cfg = config.load()
    assert cfg.model.vocab_size == cfg.data.vocab_size
    assert cfg.train.alpha == 0.75 and cfg.train.beta == 0.1


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train: {epochs: 3, alpha: 0.5}\nthreshold: {mode: dual, lambda_ctc: 4}\n")
    cfg = config.load(path, env={})
    assert cfg.train.epochs == 3 and cfg.threshold.lambda_ctc == 4
    assert config.from_dict(__import__("yaml").safe_load(config.dump(cfg)), env={}) == cfg


@pytest.mark.parametrize("raw", [{"trian": {}}, {"train": {"epoch": 3}}, {"model": {"mode": "ctc"}}])
def test_unknown_or_invalid_keys_rejected(raw):
    with pytest.raises(ConfigError):
        config.from_dict(raw, env={})


def test_data_and_model_must_agree():
    with pytest.raises(ConfigError):
        config.from_dict({"model": {"vocab_size": 9}}, env={})


def test_hash_ignores_paths_but_tracks_settings():
    a = config.from_dict({}, env={})
    b = config.from_dict({"paths": {"data": "elsewhere.trds"}}, env={})
    c = config.from_dict({"train": {"epochs": 2}}, env={})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_environment_overrides_paths_only():
    cfg = config.from_dict({}, env={"TRLAB_DATA": "/x/d.trds", "TRLAB_OUT": "/x", "TRLAB_EPOCHS": "9"})
    assert cfg.paths.data == "/x/d.trds" and cfg.paths.out_dir == "/x"
    assert cfg.train.epochs == config.TrainConfig().epochs


def test_shipped_example_matches_defaults():
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "configs" / "default.yaml"
    assert config.load(path, env={}) == config.from_dict({}, env={})
