"""
Data and key generation, the distance-based losses and the alternating training schedule:
Alice and Bob update cooperatively with Eve frozen, then Eve updates with Alice and Bob frozen.
"""
import logging
import math
import os

import numpy as np
from pydantic import BaseModel

from advmod import exceptions, util
from advmod.channel import apply_channel, channel_backward, demodulate, draw_channel, measure_signal_power, modulate
from advmod.numerics import AdamState, adam_step, make_rng
from advmod.nn.layers import ActivationKind, level_grid
from advmod.nn.networks import build_network

log = logging.getLogger(__name__)

# Eve's normalised loss at maximum uncertainty (all predictions 0.5)
UNCERTAINTY_TARGET = 0.5

CHECKPOINT_FILES = {"alice": "alice.json", "bob": "bob.json", "eve": "eve.json"}


###########################################################################################
#       DATA AND KEYS
###########################################################################################
class Batch(object):
    """
    Plaintext and key bits, both [batch, N] float arrays holding exactly 0 or 1
    """

    def __init__(self, p, k):
        if p.shape != k.shape:
            raise exceptions.ShapeMismatchError("Plaintext {} and key {} shapes differ".format(p.shape, k.shape))
        self.p = p
        self.k = k

    def __len__(self):
        return self.p.shape[0]

    def __str__(self):
        return "Batch: {} x {}".format(*self.p.shape)


class KeyPool(object):
    """
    Fixed set of distinct keys shared by Alice and Bob. Keys repeat across symbols
    """

    def __init__(self, keys):
        if len(keys) == 0:
            raise exceptions.KeyPoolError("Key pool is empty")
        self.keys = np.asarray(keys, dtype=np.float64)

    @classmethod
    def generate(cls, n, size, rng):
        """
        Draw `size` distinct uniform bit keys of length n, in draw order
        """
        if size < 1:
            raise exceptions.KeyPoolError("Key pool needs at least one key, got size {}".format(size))
        if size > 2**n:
            raise exceptions.KeyPoolError("Cannot draw {} distinct keys of {} bits".format(size, n))
        seen = set()
        keys = []
        while len(keys) < size:
            for row in rng.integers(0, 2, size=(size - len(keys), n), dtype=np.uint8):
                fingerprint = row.tobytes()
                if fingerprint not in seen:
                    seen.add(fingerprint)
                    keys.append(row)
        log.debug("Generated key pool of {} keys".format(size))
        return cls(np.array(keys))

    def sample(self, count, rng):
        return self.keys[rng.integers(0, len(self.keys), size=count)]

    def __len__(self):
        return len(self.keys)


def gen_batch(config, rng_data, rng_key, key_pool, batch_size=None):
    """
    Fresh minibatch: uniform plaintext bits and keys drawn uniformly from the pool
    :param TrainingConfig config:
    :param np.random.Generator rng_data: plaintext stream
    :param np.random.Generator rng_key: key selection stream
    :param KeyPool key_pool:
    :param int batch_size: defaults to config.batch_size
    :return: Batch
    """
    if key_pool is None or len(key_pool) == 0:
        raise exceptions.KeyPoolError("Cannot generate a batch from an empty key pool")
    batch_size = batch_size or config.batch_size
    p = rng_data.integers(0, 2, size=(batch_size, config.n)).astype(np.float64)
    return Batch(p, key_pool.sample(batch_size, rng_key))


class BatchSource(object):
    """
    Supplies training minibatches, either freshly sampled every call or by cycling through a fixed
    training set of config.train_symbols symbols
    """

    def __init__(self, config, rng_data, rng_key, key_pool):
        self.config = config
        self.rng_data = rng_data
        self.rng_key = rng_key
        self.key_pool = key_pool
        self._dataset = None
        self._position = 0
        if not config.resample_batches:
            self._dataset = gen_batch(config, rng_data, rng_key, key_pool, batch_size=config.train_symbols)

    def next_batch(self):
        if self._dataset is None:
            return gen_batch(self.config, self.rng_data, self.rng_key, self.key_pool)
        indices = np.arange(self._position, self._position + self.config.batch_size) % len(self._dataset)
        self._position = (self._position + self.config.batch_size) % len(self._dataset)
        return Batch(self._dataset.p[indices], self._dataset.k[indices])


class TrainingStreams(object):
    """
    Every random stream a training run consumes after initialisation
    """

    def __init__(self, config):
        self.data = make_rng(config.data_seed)
        self.key = make_rng(config.key_seed)
        self.channel = make_rng(config.channel_seed)
        self.key_pool = KeyPool.generate(config.n, config.key_pool_size(), self.key)
        self.batches = BatchSource(config, self.data, self.key, self.key_pool)


def evaluation_batch(config):
    """
    Evaluation set drawn from the test seeds with the same key to data ratio as training
    """
    rng_key = make_rng(config.test_key_seed)
    pool = KeyPool.generate(config.n, config.key_pool_size(config.test_symbols), rng_key)
    return gen_batch(config, make_rng(config.test_data_seed), rng_key, pool, batch_size=config.test_symbols)


###########################################################################################
#       LOSSES
###########################################################################################
def row_distances(p, p_hat):
    """L2 distance per row"""
    if np.shape(p) != np.shape(p_hat):
        raise exceptions.ShapeMismatchError("Cannot compare shapes {} and {}".format(np.shape(p), np.shape(p_hat)))
    return np.sqrt(np.sum(np.square(np.asarray(p_hat) - np.asarray(p)), axis=-1))


def distance(p, p_hat):
    """
    L2 distance between a plaintext block and a prediction. For batches, the mean of the row distances
    """
    return float(np.mean(row_distances(p, p_hat)))


def distance_grad(p, p_hat):
    """
    Gradient of the batch-mean distance wrt the predictions. Rows at distance zero get a zero gradient
    """
    rows = row_distances(p, p_hat)[:, np.newaxis]
    safe = np.where(rows > 0.0, rows, 1.0)
    return np.where(rows > 0.0, (p_hat - p) / safe, 0.0) / p.shape[0]


def loss_eve(p, p_eve):
    return distance(p, p_eve)


def loss_bob(p, p_bob):
    return distance(p, p_bob)


def normalized_eve_loss(eve_loss, n):
    """Scaled so that all-0.5 predictions score exactly 0.5"""
    return eve_loss / math.sqrt(n)


def joint_loss(bob_loss, eve_loss, variant, n):
    """
    Cooperative loss of Alice and Bob
    subtractive: L_B - L_E
    uncertainty: L_B + (0.5 - L_E / sqrt(N))^2
    """
    if variant == "subtractive":
        return bob_loss - eve_loss
    if variant == "uncertainty":
        return bob_loss + (UNCERTAINTY_TARGET - normalized_eve_loss(eve_loss, n)) ** 2
    raise ValueError("Unknown loss variant: {}".format(variant))


def joint_loss_eve_weight(eve_loss, variant, n):
    """d joint_loss / d L_E"""
    if variant == "subtractive":
        return -1.0
    if variant == "uncertainty":
        return -2.0 * (UNCERTAINTY_TARGET - normalized_eve_loss(eve_loss, n)) / math.sqrt(n)
    raise ValueError("Unknown loss variant: {}".format(variant))


class LossReport(BaseModel):
    epoch: int
    loss_bob: float
    loss_eve: float
    loss_eve_norm: float
    joint: float

    def row(self):
        return tuple(getattr(self, column) for column in util.LOSS_HISTORY_HEADER)


class LossHistory(object):
    def __init__(self, reports=None):
        self.reports = list(reports or [])

    def append(self, report):
        self.reports.append(report)

    def column(self, name):
        return np.array([getattr(report, name) for report in self.reports])

    def to_csv(self, path):
        return util.write_csv(path, util.LOSS_HISTORY_HEADER, (report.row() for report in self.reports))

    def __len__(self):
        return len(self.reports)

    def __getitem__(self, item):
        return self.reports[item]


###########################################################################################
#       PIPELINE
###########################################################################################
class Transmission(object):
    """
    Intermediate values of one pass P, K -> Alice -> modem -> channel -> Bob / Eve
    """

    def __init__(self, batch, cipher, symbols, realization, received, cipher_received, p_bob, p_eve):
        self.batch = batch
        self.cipher = cipher
        self.symbols = symbols
        self.realization = realization
        self.received = received
        self.cipher_received = cipher_received
        self.p_bob = p_bob
        self.p_eve = p_eve


def reference_signal_power(config):
    """
    Mean |x|^2 of a complex symbol whose parts are uniform over the discrete tanh level grid
    """
    return float(2.0 * np.mean(np.square(level_grid(config.levels))))


def realize_channel(config, symbols, rng, snr_db=None):
    """
    Draw a realization for the configured channel, referencing the SNR to the batch's signal power.
    A silent batch (every cipher value quantized to 0) is referenced to the level grid's power instead
    """
    signal_power = measure_signal_power(symbols)
    if signal_power == 0.0 and config.channel.noisy:
        signal_power = reference_signal_power(config)
        log.warning("Batch has zero signal power, referencing the SNR to {:.4f} instead".format(signal_power))
    return draw_channel(
        config.channel,
        symbols.shape,
        signal_power,
        rng,
        snr_db=config.train_snr_db if snr_db is None else snr_db,
        rayleigh_scale=config.rayleigh_scale,
        fading_granularity=config.fading_granularity,
    )


def run_pipeline(alice, bob, eve, batch, config, rng, snr_db=None, realization=None):
    """
    Forward pass of the whole system. Bob and Eve both observe the same channel output
    :param Network alice:
    :param Network bob: may be None to skip Bob
    :param Network eve: may be None to skip Eve
    :param Batch batch:
    :param TrainingConfig config:
    :param np.random.Generator rng: channel stream, unused when a realization is supplied
    :param float snr_db: defaults to the training SNR
    :param ChannelRealization realization: reuse a frozen draw instead of drawing a new one
    :return: Transmission
    """
    cipher = alice.forward(np.hstack([batch.p, batch.k]))
    symbols = modulate(cipher)
    if realization is None:
        realization = realize_channel(config, symbols, rng, snr_db=snr_db)
    received = apply_channel(symbols, realization)
    cipher_received = demodulate(received, config.n)
    p_bob = bob.forward(np.hstack([cipher_received, batch.k])) if bob is not None else None
    p_eve = eve.forward(cipher_received) if eve is not None else None
    return Transmission(batch, cipher, symbols, realization, received, cipher_received, p_bob, p_eve)


def cooperative_backward(alice, bob, eve, transmission, config):
    """
    Backpropagate the joint loss into Alice and Bob through the channel and through Eve.
    Eve's gradients are computed on the way but never applied
    """
    p = transmission.batch.p
    eve_weight = joint_loss_eve_weight(loss_eve(p, transmission.p_eve), config.loss_variant, config.n)
    grad_from_bob = bob.backward(distance_grad(p, transmission.p_bob))[:, : config.n]
    grad_from_eve = eve.backward(eve_weight * distance_grad(p, transmission.p_eve))
    grad_received = modulate(grad_from_bob + grad_from_eve)
    grad_symbols = channel_backward(grad_received, transmission.realization)
    alice.backward(demodulate(grad_symbols, config.n))


def _check_loss(name, value, epoch, phase):
    if not math.isfinite(value):
        raise exceptions.NonFiniteLossError(name, epoch, phase)


def make_optimizers(alice, bob, eve, config):
    return {
        "alice_bob": AdamState.for_parameters(
            alice.parameters() + bob.parameters(), learning_rate=config.learning_rate
        ),
        "eve": AdamState.for_parameters(eve.parameters(), learning_rate=config.learning_rate),
    }


def train_epoch(alice, bob, eve, config, optimizers, streams, epoch=0):
    """
    One cooperative step for Alice and Bob followed by one adversarial step for Eve
    :param Network alice:
    :param Network bob:
    :param Network eve:
    :param TrainingConfig config:
    :param dict optimizers: AdamState under "alice_bob" and "eve"
    :param TrainingStreams streams:
    :param int epoch: number used in reports and errors
    :return: LossReport from the cooperative phase
    """
    # Phase 1: Eve frozen
    batch = streams.batches.next_batch()
    transmission = run_pipeline(alice, bob, eve, batch, config, streams.channel)
    bob_loss = loss_bob(batch.p, transmission.p_bob)
    eve_loss = loss_eve(batch.p, transmission.p_eve)
    joint = joint_loss(bob_loss, eve_loss, config.loss_variant, config.n)
    for name, value in (("loss_bob", bob_loss), ("loss_eve", eve_loss), ("joint", joint)):
        _check_loss(name, value, epoch, 1)

    eve_snapshot = eve.snapshot() if config.verify_freezing else None
    cooperative_backward(alice, bob, eve, transmission, config)
    adam_step(alice.parameters() + bob.parameters(), alice.gradients() + bob.gradients(), optimizers["alice_bob"])
    if eve_snapshot is not None:
        assert eve.matches_snapshot(
            eve_snapshot
        ), "Eve parameters changed during the cooperative phase of epoch {}".format(epoch)

    # Phase 2: Alice and Bob frozen
    alice_snapshot = alice.snapshot() if config.verify_freezing else None
    bob_snapshot = bob.snapshot() if config.verify_freezing else None
    eve_batch = batch if config.eve_reuses_batch else streams.batches.next_batch()
    eve_transmission = run_pipeline(alice, None, eve, eve_batch, config, streams.channel)
    _check_loss("loss_eve", loss_eve(eve_batch.p, eve_transmission.p_eve), epoch, 2)
    eve.backward(distance_grad(eve_batch.p, eve_transmission.p_eve))
    adam_step(eve.parameters(), eve.gradients(), optimizers["eve"])
    if alice_snapshot is not None:
        assert alice.matches_snapshot(alice_snapshot) and bob.matches_snapshot(
            bob_snapshot
        ), "Alice or Bob parameters changed during the adversarial phase of epoch {}".format(epoch)

    return LossReport(
        epoch=epoch,
        loss_bob=bob_loss,
        loss_eve=eve_loss,
        loss_eve_norm=normalized_eve_loss(eve_loss, config.n),
        joint=joint,
    )


def build_participants(config):
    """
    Alice, Bob and Eve initialised in that order from the init stream
    """
    rng = make_rng(config.init_seed)
    alice_activation = config.resolved_alice_activation
    alice = build_network(
        "alice",
        config.n,
        rng,
        output_activation=alice_activation,
        levels=config.levels if alice_activation is ActivationKind.TANH_DISCRETE else None,
    )
    bob = build_network("bob", config.n, rng)
    eve = build_network("eve", config.n, rng)
    return alice, bob, eve


def save_checkpoints(alice, bob, eve, directory):
    """
    :return: list of written paths
    """
    paths = []
    for network in (alice, bob, eve):
        path = os.path.join(directory, CHECKPOINT_FILES[network.role])
        network.save(path)
        paths.append(path)
    return paths


def train(config, checkpoint_dir=None):
    """
    Full training run
    :param TrainingConfig config:
    :param str checkpoint_dir: when given, the three networks are saved there at the end
    :return: (alice, bob, eve, LossHistory)
    """
    log.info("Training {}".format(config))
    alice, bob, eve = build_participants(config)
    optimizers = make_optimizers(alice, bob, eve, config)
    streams = TrainingStreams(config)
    history = LossHistory()
    for epoch in range(1, config.resolved_epochs + 1):
        report = train_epoch(alice, bob, eve, config, optimizers, streams, epoch=epoch)
        history.append(report)
        if epoch % config.log_interval == 0:
            log.info(
                "Epoch {}: L_B={:.4f} L_E={:.4f} L_E_N={:.4f} joint={:.4f}".format(
                    epoch, report.loss_bob, report.loss_eve, report.loss_eve_norm, report.joint
                )
            )
    if checkpoint_dir is not None:
        save_checkpoints(alice, bob, eve, checkpoint_dir)
    return alice, bob, eve, history
