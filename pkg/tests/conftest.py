import json
import os

import pytest

from advmod.config import SEED_OVERRIDE_ENV, TrainingConfig
from advmod.numerics import make_rng

EXAMPLE_CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "example", "configs")

# Small enough that a few epochs run in well under a second
TINY_CONFIG = {
    "n": 4,
    "train_symbols": 64,
    "test_symbols": 32,
    "batch_size": 16,
    "epochs": 3,
    "key_to_data_ratio": 0.125,
    "log_interval": 1,
}


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_OVERRIDE_ENV, raising=False)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def tiny_document():
    return dict(TINY_CONFIG)


@pytest.fixture
def tiny_config(tiny_document):
    return TrainingConfig(**tiny_document)


@pytest.fixture
def write_config(tmp_path):
    """Write a config document to a JSON file and return its path"""

    def _write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)

    return _write
