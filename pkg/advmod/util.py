import csv
import hashlib
import logging
import math

import numpy as np

log = logging.getLogger(__name__)

# CSV headers of every exported table
LOSS_HISTORY_HEADER = ("epoch", "loss_bob", "loss_eve", "loss_eve_norm", "joint")
BER_SWEEP_HEADER = ("snr_db", "ber_bob", "ber_eve_trained", "ber_eve_hard_decision")
HISTOGRAM_HEADER = ("bin_left", "bin_right", "count_correct", "count_incorrect")
CONSTELLATION_HEADER = ("re", "im")
LEVELS_SWEEP_HEADER = ("L", "final_loss_bob", "final_loss_eve", "ber_bob", "ber_eve")


def csv_value(value):
    """
    Plain Python scalar for CSV output. Python floats print as the shortest round-trip decimal
    """
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def write_csv(path, header, rows):
    """
    Write a table with a mandatory header row
    :param str path:
    :param tuple header: column names
    :param rows: iterable of sequences, one per row
    :return: number of data rows written
    """
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError("Row {} has {} values, header has {}".format(count, len(row), len(header)))
            writer.writerow([csv_value(value) for value in row])
            count += 1
    log.debug("Wrote {} rows to {}".format(count, path))
    return count


def read_csv(path):
    """
    Read a table written by write_csv
    :return: (header, rows) with rows as lists of strings
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return tuple(rows[0]), rows[1:]


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_snr_spec(spec):
    """
    Parse "start:stop:step" (stop inclusive) or a single value into a list of SNRs in dB
    :param str spec:
    :return: list of float
    """
    parts = spec.split(":")
    try:
        values = [float(part) for part in parts]
    except ValueError:
        raise ValueError('SNR spec must be "start:stop:step" or a number, got: "{}"'.format(spec))
    if len(values) == 1:
        return values
    if len(values) != 3:
        raise ValueError('SNR spec must be "start:stop:step" or a number, got: "{}"'.format(spec))
    start, stop, step = values
    if step <= 0 or stop < start:
        raise ValueError('SNR spec "{}" needs a positive step and stop >= start'.format(spec))
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def moving_average(values, window):
    """Trailing moving average; shorter series than the window give an empty array"""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return np.array([])
    return np.convolve(values, np.ones(window) / window, mode="valid")
