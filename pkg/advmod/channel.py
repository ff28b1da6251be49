"""
Real/complex modulation and the clear, AWGN and Rayleigh wiretap channels

Complex vectors are complex128 arrays shaped [batch, M] with M = ceil(N / 2).
"""
import enum
import hashlib
import logging
import math

import numpy as np

from advmod import exceptions

log = logging.getLogger(__name__)

# Scale that gives the Rayleigh gain magnitude a unit mean: E|h| = scale * sqrt(pi / 2)
UNIT_MEAN_RAYLEIGH_SCALE = math.sqrt(2.0 / math.pi)


class ChannelKind(str, enum.Enum):
    CLEAR = "clear"
    AWGN = "awgn"
    RAYLEIGH = "rayleigh"

    @property
    def noisy(self):
        return self is not ChannelKind.CLEAR


class FadingGranularity(str, enum.Enum):
    PER_SAMPLE = "per_sample"
    PER_BLOCK = "per_block"


def symbol_count(n):
    return math.ceil(n / 2)


###########################################################################################
#       MODEM
###########################################################################################
def modulate(c):
    """
    Pair consecutive reals into complex samples: x_m = c_(2m-1) + j c_(2m). Odd N is zero-padded
    :param np.ndarray c: [..., N]
    :return: complex array [..., ceil(N/2)]
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] % 2:
        c = np.concatenate([c, np.zeros(c.shape[:-1] + (1,))], axis=-1)
    return c[..., 0::2] + 1j * c[..., 1::2]


def demodulate(y, n):
    """
    Interleave real and imaginary parts back into N reals, dropping the pad of odd N
    :param np.ndarray y: complex [..., ceil(N/2)]
    :param int n:
    :return: [..., N]
    """
    if y.shape[-1] != symbol_count(n):
        raise exceptions.ModemError(
            "Cannot demodulate {} complex samples into {} reals, need {}".format(y.shape[-1], n, symbol_count(n))
        )
    out = np.empty(y.shape[:-1] + (2 * y.shape[-1],), dtype=np.float64)
    out[..., 0::2] = y.real
    out[..., 1::2] = y.imag
    return out[..., :n]


def measure_signal_power(x):
    """
    Mean |x|^2 over every sample of the batch
    """
    if np.size(x) == 0:
        raise exceptions.ChannelError("Cannot measure the power of an empty batch")
    return float(np.mean(np.abs(x) ** 2))


def noise_variance(signal_power, snr_db):
    return signal_power / 10.0 ** (snr_db / 10.0)


###########################################################################################
#       CHANNEL REALIZATIONS
###########################################################################################
class ChannelRealization(object):
    """
    Frozen draw of fading gains and noise for one forward/backward pass
    """

    def __init__(self, kind, gains, noise, variance):
        """
        :param ChannelKind kind:
        :param np.ndarray gains: complex fading gains, broadcastable to the noise shape
        :param np.ndarray noise: complex noise samples
        :param float variance: total complex noise variance used for the draw
        """
        self.kind = ChannelKind(kind)
        self.gains = np.array(gains, dtype=np.complex128)
        self.noise = np.array(noise, dtype=np.complex128)
        self.variance = float(variance)
        self.gains.setflags(write=False)
        self.noise.setflags(write=False)
        self._fingerprint = self._digest()

    def _digest(self):
        digest = hashlib.sha256(self.gains.tobytes())
        digest.update(self.noise.tobytes())
        return digest.hexdigest()

    def verify(self):
        if self._digest() != self._fingerprint:
            raise exceptions.ChannelRealizationError("{} was modified after it was drawn".format(self))

    @property
    def shape(self):
        return self.noise.shape

    def __str__(self):
        return "ChannelRealization: {} shape={} noise variance={:.4g}".format(
            self.kind.value, self.shape, self.variance
        )


def draw_channel(
    kind,
    shape,
    signal_power,
    rng,
    snr_db=None,
    rayleigh_scale=UNIT_MEAN_RAYLEIGH_SCALE,
    fading_granularity=FadingGranularity.PER_SAMPLE,
):
    """
    Draw gains and noise for a batch of complex samples
    :param ChannelKind kind:
    :param tuple shape: (batch, M)
    :param float signal_power: reference power for the SNR, from measure_signal_power
    :param np.random.Generator rng: channel stream
    :param float snr_db: required for noisy kinds
    :param float rayleigh_scale: Rayleigh scale of |h|
    :param FadingGranularity fading_granularity: one gain per complex sample or per block (row)
    :return: ChannelRealization
    """
    kind = ChannelKind(kind)
    if kind is ChannelKind.CLEAR:
        return ChannelRealization(kind, np.ones(shape), np.zeros(shape), 0.0)

    if snr_db is None or not math.isfinite(snr_db):
        raise exceptions.ChannelError("{} channel needs a finite SNR, got {}".format(kind.value, snr_db))
    if not signal_power > 0:
        raise exceptions.ChannelError(
            "{} channel needs a positive signal power, got {}".format(kind.value, signal_power)
        )
    variance = noise_variance(signal_power, snr_db)
    noise = math.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    if kind is ChannelKind.AWGN:
        gains = np.ones(shape)
    else:
        if FadingGranularity(fading_granularity) is FadingGranularity.PER_BLOCK:
            gain_shape = tuple(shape[:-1]) + (1,)
        else:
            gain_shape = tuple(shape)
        magnitude = rng.rayleigh(rayleigh_scale, size=gain_shape)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=gain_shape)
        gains = np.broadcast_to(magnitude * np.exp(1j * phase), shape)
    realization = ChannelRealization(kind, gains, noise, variance)
    log.debug("Drew {}".format(realization))
    return realization


def apply_channel(x, realization):
    """
    y = h x + n elementwise
    """
    if x.shape != realization.shape:
        raise exceptions.ChannelError(
            "Signal shape {} does not match realization shape {}".format(x.shape, realization.shape)
        )
    return realization.gains * x + realization.noise


def channel_backward(upstream, realization):
    """
    Gradient wrt x of the real-vector form of apply_channel. The gain acts on (re, im) as the
    rotation-scaling matrix [[hr, -hi], [hi, hr]]; its transpose is multiplication by conj(h).
    Noise contributes nothing
    :param np.ndarray upstream: complex gradient (d/dRe + j d/dIm) wrt y
    :param ChannelRealization realization: the realization used in the forward pass
    :return: complex gradient wrt x
    """
    realization.verify()
    if upstream.shape != realization.shape:
        raise exceptions.ChannelError(
            "Gradient shape {} does not match realization shape {}".format(upstream.shape, realization.shape)
        )
    return np.conj(realization.gains) * upstream
