"""
Hard-decision decoding, bit error rates, SNR sweeps and the CSV exports behind the figures
"""
import logging
import math
from typing import List

import numpy as np
from pydantic import BaseModel

from advmod import exceptions, util
from advmod.numerics import make_rng
from advmod.trainer import run_pipeline

log = logging.getLogger(__name__)

# Tie rules: a prediction of exactly 0.5 decodes to 1, a received cipher value of exactly 0 decodes to 1
HARD_DECISION_THRESHOLD = 0.5
CIPHER_THRESHOLD = 0.0

DEFAULT_BINS = 50
PREDICTION_RANGE = (0.0, 1.0)
CIPHER_RANGE = (-1.0, 1.0)

# SNR recorded for the single row of a clear channel sweep
CLEAR_CHANNEL_SNR = math.inf


def harden(values, threshold=HARD_DECISION_THRESHOLD):
    """
    Bit 1 where value >= threshold
    """
    return (np.asarray(values) >= threshold).astype(np.uint8)


def ber(a, b):
    """
    Fraction of positions where two bit tensors differ
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise exceptions.ShapeMismatchError("Cannot compare bit tensors of shapes {} and {}".format(a.shape, b.shape))
    if a.size == 0:
        raise exceptions.EvaluationError("Cannot compute the bit error rate of empty tensors")
    return float(np.mean(a.astype(np.uint8) != b.astype(np.uint8)))


def hard_decision_eve(cipher_received):
    """
    Baseline eavesdropper that maps each received cipher value to a bit by its sign
    """
    return harden(cipher_received, threshold=CIPHER_THRESHOLD)


###########################################################################################
#       SNR SWEEP
###########################################################################################
class BerRow(BaseModel):
    snr_db: float
    ber_bob: float
    ber_eve_trained: float
    ber_eve_hard_decision: float

    def row(self):
        return tuple(getattr(self, column) for column in util.BER_SWEEP_HEADER)


class BerTable(object):
    def __init__(self, rows: List[BerRow]):
        snrs = [row.snr_db for row in rows]
        if any(later <= earlier for earlier, later in zip(snrs, snrs[1:])):
            raise exceptions.EvaluationError("SNR values must be strictly increasing, got {}".format(snrs))
        for row in rows:
            if not all(0.0 <= value <= 1.0 for value in row.row()[1:]):
                raise exceptions.EvaluationError("BER outside [0, 1] in row {}".format(row))
        self.rows = rows

    def column(self, name):
        return np.array([getattr(row, name) for row in self.rows])

    def to_csv(self, path):
        return util.write_csv(path, util.BER_SWEEP_HEADER, (row.row() for row in self.rows))

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, item):
        return self.rows[item]


def _check_networks(alice, bob, eve, config, batch):
    for network in (alice, bob, eve):
        if network.n != config.n:
            raise exceptions.EvaluationError("{} does not match block length N={}".format(network, config.n))
    if batch.p.shape[1] != config.n:
        raise exceptions.EvaluationError("Test set has width {}, expected N={}".format(batch.p.shape[1], config.n))


def evaluate_transmission(transmission):
    """
    Bit error rates of one evaluated pass
    :return: (ber_bob, ber_eve_trained, ber_eve_hard_decision)
    """
    p = transmission.batch.p
    return (
        ber(harden(transmission.p_bob), p),
        ber(harden(transmission.p_eve), p),
        ber(hard_decision_eve(transmission.cipher_received), p),
    )


def snr_sweep(alice, bob, eve, config, snr_list, batch):
    """
    Run the full pipeline on the test set at each SNR of the configured channel family
    :param Network alice:
    :param Network bob:
    :param Network eve:
    :param TrainingConfig config: channel family, fading settings and channel seed
    :param list snr_list: SNRs in dB, strictly increasing. Ignored for the clear channel
    :param Batch batch: test set
    :return: BerTable
    """
    _check_networks(alice, bob, eve, config, batch)
    if not config.channel.noisy:
        if len(snr_list) > 1:
            log.warning("Clear channel has no noise, ignoring the SNR list {}".format(snr_list))
        snr_list = [CLEAR_CHANNEL_SNR]
    rows = []
    for index, snr_db in enumerate(snr_list):
        # Independent channel stream per SNR point
        rng = make_rng(config.channel_seed, index)
        transmission = run_pipeline(
            alice, bob, eve, batch, config, rng, snr_db=snr_db if config.channel.noisy else None
        )
        ber_bob, ber_eve, ber_hard = evaluate_transmission(transmission)
        rows.append(BerRow(snr_db=snr_db, ber_bob=ber_bob, ber_eve_trained=ber_eve, ber_eve_hard_decision=ber_hard))
        log.info(
            "{} at {} dB: Bob BER={:.4f} Eve BER={:.4f} hard decision Eve BER={:.4f}".format(
                config.channel.value, snr_db, ber_bob, ber_eve, ber_hard
            )
        )
    return BerTable(rows)


###########################################################################################
#       FIGURE DATA
###########################################################################################
class Histogram(object):
    """
    Uniform bins with counts split into correctly and incorrectly decoded values
    """

    def __init__(self, edges, count_correct, count_incorrect):
        self.edges = edges
        self.count_correct = count_correct
        self.count_incorrect = count_incorrect

    @property
    def total(self):
        return int(self.count_correct.sum() + self.count_incorrect.sum())

    def rows(self):
        return zip(self.edges[:-1], self.edges[1:], self.count_correct, self.count_incorrect)

    def to_csv(self, path):
        return util.write_csv(path, util.HISTOGRAM_HEADER, self.rows())


def export_histogram(values, correct, bins=DEFAULT_BINS, value_range=PREDICTION_RANGE, path=None):
    """
    Histogram of values split by a correctness mask. Values outside the range fall in the end bins
    :param np.ndarray values:
    :param np.ndarray correct: boolean mask, same shape as values
    :param int bins:
    :param tuple value_range: (low, high)
    :param str path: CSV destination, optional
    :return: Histogram
    """
    values = np.ravel(values)
    correct = np.ravel(correct).astype(bool)
    if values.shape != correct.shape:
        raise exceptions.ShapeMismatchError(
            "Histogram got {} values and a mask of {}".format(values.shape, correct.shape)
        )
    if bins < 1:
        raise exceptions.EvaluationError("Histogram needs at least one bin, got {}".format(bins))
    low, high = value_range
    clipped = np.clip(values, low, high)
    edges = np.linspace(low, high, bins + 1)
    count_correct, _ = np.histogram(clipped[correct], bins=edges)
    count_incorrect, _ = np.histogram(clipped[~correct], bins=edges)
    histogram = Histogram(edges, count_correct, count_incorrect)
    if path is not None:
        histogram.to_csv(path)
    return histogram


def export_constellation(symbols, path):
    """
    Write every transmitted complex sample as a (re, im) row
    :param np.ndarray symbols: complex samples of any shape
    :param str path:
    :return: number of points written
    """
    symbols = np.ravel(symbols)
    if symbols.size == 0:
        raise exceptions.EvaluationError("Cannot export an empty constellation")
    return util.write_csv(path, util.CONSTELLATION_HEADER, zip(symbols.real, symbols.imag))
