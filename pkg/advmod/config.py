import json
import logging
import os
from typing import Optional

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from advmod import exceptions
from advmod.channel import UNIT_MEAN_RAYLEIGH_SCALE, ChannelKind, FadingGranularity
from advmod.nn.layers import ActivationKind

log = logging.getLogger(__name__)

SEED_OVERRIDE_ENV = "ADVMOD_SEED_OVERRIDE"

# Training epochs per channel when the config leaves them unset
DEFAULT_EPOCHS = {
    ChannelKind.CLEAR: 4000,
    ChannelKind.AWGN: 7000,
    ChannelKind.RAYLEIGH: 8000,
}

# Seed fields in the order the override offsets are applied
SEED_FIELDS = ("data_seed", "key_seed", "init_seed", "channel_seed", "test_data_seed", "test_key_seed")

LOSS_VARIANTS = ("subtractive", "uncertainty")


class TrainingConfig(BaseModel):
    """
    All hyperparameters of a training run. Defaults follow the published experiment setup
    """

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    n: int = 96
    train_symbols: int = 20000
    test_symbols: int = 1000
    batch_size: int = 8000
    learning_rate: float = 0.001
    epochs: Optional[int] = None
    channel: ChannelKind = ChannelKind.CLEAR
    train_snr_db: float = 25.0
    levels: int = 13
    alice_activation: Optional[ActivationKind] = None
    key_to_data_ratio: float = 0.005
    loss_variant: str = "uncertainty"
    data_seed: int = 1
    key_seed: int = 2
    init_seed: int = 3
    channel_seed: int = 4
    test_data_seed: int = 101
    test_key_seed: int = 102
    rayleigh_scale: float = UNIT_MEAN_RAYLEIGH_SCALE
    fading_granularity: FadingGranularity = FadingGranularity.PER_SAMPLE
    resample_batches: bool = True
    eve_reuses_batch: bool = False
    verify_freezing: bool = False
    log_interval: int = 100

    @field_validator("n")
    @classmethod
    def check_block_length(cls, n):
        if n < 2 or n % 2:
            raise ValueError("N must be even and >= 2, got {}".format(n))
        return n

    @field_validator("train_symbols", "test_symbols", "batch_size", "log_interval")
    @classmethod
    def check_positive(cls, value):
        if value < 1:
            raise ValueError("must be positive, got {}".format(value))
        return value

    @field_validator("epochs")
    @classmethod
    def check_epochs(cls, epochs):
        if epochs is not None and epochs < 0:
            raise ValueError("epochs cannot be negative, got {}".format(epochs))
        return epochs

    @field_validator("learning_rate", "rayleigh_scale")
    @classmethod
    def check_strictly_positive(cls, value):
        if not value > 0:
            raise ValueError("must be > 0, got {}".format(value))
        return value

    @field_validator("levels")
    @classmethod
    def check_levels(cls, levels):
        if levels < 2:
            raise ValueError("discrete tanh needs at least 2 levels, got {}".format(levels))
        return levels

    @field_validator("key_to_data_ratio")
    @classmethod
    def check_ratio(cls, ratio):
        if not 0 < ratio <= 1:
            raise ValueError("key to data ratio must lie in (0, 1], got {}".format(ratio))
        return ratio

    @field_validator("loss_variant")
    @classmethod
    def check_loss_variant(cls, variant):
        if variant not in LOSS_VARIANTS:
            raise ValueError("loss variant must be one of {}, got {}".format(LOSS_VARIANTS, variant))
        return variant

    @field_validator("alice_activation")
    @classmethod
    def check_alice_activation(cls, kind):
        if kind is not None and kind not in (ActivationKind.TANH, ActivationKind.TANH_DISCRETE):
            raise ValueError("Alice ends in tanh or tanh_discrete, got {}".format(kind.value))
        return kind

    @model_validator(mode="after")
    def check_consistency(self):
        if self.batch_size > self.train_symbols:
            raise ValueError(
                "batch size {} exceeds the {} training symbols".format(self.batch_size, self.train_symbols)
            )
        for name, symbols in (("training", self.train_symbols), ("test", self.test_symbols)):
            size = self.key_pool_size(symbols)
            if size < 1:
                raise ValueError(
                    "{} key pool is empty: ratio {} of {} symbols rounds to 0 keys".format(
                        name, self.key_to_data_ratio, symbols
                    )
                )
            if size > 2**self.n:
                raise ValueError("cannot draw {} distinct {} keys of {} bits".format(size, name, self.n))
        if {self.test_data_seed, self.test_key_seed} & {self.data_seed, self.key_seed}:
            raise ValueError("test data and key seeds must differ from the training seeds")
        return self

    ###########################################################################################
    #       RESOLVED VALUES
    ###########################################################################################
    @property
    def resolved_epochs(self):
        return DEFAULT_EPOCHS[self.channel] if self.epochs is None else self.epochs

    @property
    def resolved_alice_activation(self):
        if self.alice_activation is not None:
            return self.alice_activation
        return ActivationKind.TANH_DISCRETE if self.channel.noisy else ActivationKind.TANH

    def key_pool_size(self, symbols=None):
        symbols = self.train_symbols if symbols is None else symbols
        return int(round(self.key_to_data_ratio * symbols))

    def seeds(self):
        return {field: getattr(self, field) for field in SEED_FIELDS}

    def with_overrides(self, **changes):
        """Validated copy with some fields replaced"""
        return type(self).model_validate({**self.model_dump(), **changes})

    def __str__(self):
        return "TrainingConfig: N={} channel={} epochs={} batch={} L={} variant={}".format(
            self.n,
            self.channel.value,
            self.resolved_epochs,
            self.batch_size,
            self.levels,
            self.loss_variant,
        )


def parse_config(document):
    """
    Validate a config mapping, applying the seed override environment variable
    :param dict document:
    :return: TrainingConfig
    """
    override = os.environ.get(SEED_OVERRIDE_ENV)
    if override is not None:
        try:
            base_seed = int(override)
        except ValueError:
            raise exceptions.ConfigurationError("{} must be an integer, got: {}".format(SEED_OVERRIDE_ENV, override))
        log.warning("{}={} overrides all seeds".format(SEED_OVERRIDE_ENV, base_seed))
        document = dict(document, **{field: base_seed + offset for offset, field in enumerate(SEED_FIELDS)})
    try:
        return TrainingConfig.model_validate(document)
    except ValidationError as e:
        raise exceptions.ConfigurationError("Invalid training config: {}".format(e))


def load_config(path):
    """
    Read and validate a JSON training config
    :param str path:
    :return: TrainingConfig
    """
    try:
        with open(path) as f:
            document = json.load(f)
    except OSError as e:
        raise exceptions.ConfigurationError("Could not read config {}: {}".format(path, e))
    except ValueError as e:
        raise exceptions.ConfigurationError("Config {} is not valid JSON: {}".format(path, e))
    if not isinstance(document, dict):
        raise exceptions.ConfigurationError("Config {} must be a JSON object".format(path))
    config = parse_config(document)
    log.info("Loaded {} from {}".format(config, path))
    return config
