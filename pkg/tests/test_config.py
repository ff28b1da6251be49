import glob
import os

import pytest

from advmod import exceptions
from advmod.channel import ChannelKind
from advmod.config import SEED_FIELDS, SEED_OVERRIDE_ENV, TrainingConfig, load_config, parse_config
from advmod.nn.layers import ActivationKind
from tests.conftest import EXAMPLE_CONFIG_DIR


def test_defaults():
    config = TrainingConfig()
    assert (config.n, config.batch_size, config.train_symbols, config.levels) == (96, 8000, 20000, 13)
    assert config.learning_rate == 0.001
    assert config.key_pool_size() == 100
    assert config.key_pool_size(config.test_symbols) == 5
    assert config.loss_variant == "uncertainty"


@pytest.mark.parametrize(
    "channel, epochs, activation",
    [
        (ChannelKind.CLEAR, 4000, ActivationKind.TANH),
        (ChannelKind.AWGN, 7000, ActivationKind.TANH_DISCRETE),
        (ChannelKind.RAYLEIGH, 8000, ActivationKind.TANH_DISCRETE),
    ],
)
def test_resolved_values(channel, epochs, activation):
    config = TrainingConfig(channel=channel)
    assert config.resolved_epochs == epochs
    assert config.resolved_alice_activation is activation


def test_explicit_values_win():
    config = TrainingConfig(channel="awgn", epochs=10, alice_activation="tanh")
    assert config.resolved_epochs == 10
    assert config.resolved_alice_activation is ActivationKind.TANH


@pytest.mark.parametrize(
    "changes",
    [
        {"n": 5},
        {"n": 0},
        {"key_to_data_ratio": 0.0},
        {"key_to_data_ratio": 1.5},
        {"batch_size": 30000},
        {"levels": 1},
        {"learning_rate": 0.0},
        {"epochs": -1},
        {"loss_variant": "hinge"},
        {"channel": "rician"},
        {"alice_activation": "relu"},
        {"test_data_seed": 1},
        {"n": 4, "train_symbols": 100, "batch_size": 10, "key_to_data_ratio": 0.5},
        {"n": 16, "train_symbols": 50, "batch_size": 16},
        {"n": 16, "train_symbols": 2000, "batch_size": 16, "test_symbols": 50},
        {"n": 4, "train_symbols": 20, "batch_size": 10, "key_to_data_ratio": 0.5, "test_symbols": 40},
        {"unknown_field": 3},
    ],
)
def test_invalid_config(changes):
    with pytest.raises(exceptions.ConfigurationError):
        parse_config(changes)


def test_seed_override(monkeypatch):
    monkeypatch.setenv(SEED_OVERRIDE_ENV, "10")
    config = parse_config({"n": 16, "data_seed": 99})
    assert [config.seeds()[field] for field in SEED_FIELDS] == [10, 11, 12, 13, 14, 15]


def test_bad_seed_override(monkeypatch):
    monkeypatch.setenv(SEED_OVERRIDE_ENV, "ten")
    with pytest.raises(exceptions.ConfigurationError):
        parse_config({})


def test_with_overrides_validates(tiny_config):
    changed = tiny_config.with_overrides(channel="awgn", levels=5)
    assert changed.channel is ChannelKind.AWGN and changed.levels == 5
    assert tiny_config.channel is ChannelKind.CLEAR
    with pytest.raises(ValueError):
        tiny_config.with_overrides(levels=1)


def test_load_config(write_config, tiny_document):
    config = load_config(write_config(dict(tiny_document, channel="rayleigh", fading_granularity="per_block")))
    assert config.n == 4
    assert config.channel is ChannelKind.RAYLEIGH


def test_load_config_errors(tmp_path, write_config):
    with pytest.raises(exceptions.ConfigurationError):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(exceptions.ConfigurationError):
        load_config(str(bad))
    with pytest.raises(exceptions.ConfigurationError):
        load_config(write_config([1, 2, 3]))


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(EXAMPLE_CONFIG_DIR, "*.json"))))
def test_bundled_configs_load(path):
    config = load_config(path)
    if "small" in os.path.basename(path):
        assert config.n == 16 and config.batch_size == 512 and config.resolved_epochs <= 3000
        assert config.key_pool_size() >= 100 and config.key_pool_size(config.test_symbols) >= 100
    else:
        assert config.n == 96 and config.batch_size == 8000


def test_config_round_trips_through_json(tiny_config):
    assert parse_config(tiny_config.model_dump(mode="json")) == tiny_config
