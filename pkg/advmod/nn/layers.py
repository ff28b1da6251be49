import enum
import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from advmod import exceptions
from advmod.numerics import DTYPE, check_same_shape, matmul, xavier_init, zero_bias
from advmod.nn import attributes

log = logging.getLogger(__name__)

# Output range of tanh, the quantizer's grid end points
TANH_MIN = -1.0
TANH_MAX = 1.0


class ActivationKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    TANH_DISCRETE = "tanh_discrete"


###########################################################################################
#       DISCRETE TANH
###########################################################################################
def level_step(levels):
    if levels < 2:
        raise ValueError("Discrete tanh needs at least 2 levels, got {}".format(levels))
    return (TANH_MAX - TANH_MIN) / (levels - 1)


def level_grid(levels):
    """All values the discrete tanh can output for the given level count"""
    return np.clip(np.arange(levels) * level_step(levels) + TANH_MIN, TANH_MIN, TANH_MAX)


def quantize(y, levels):
    """
    Round values of [-1, 1] to the nearest of `levels` evenly spaced points (ties round up), clamped to [-1, 1]
    """
    step = level_step(levels)
    y_q = np.floor((y - TANH_MIN) / step + 0.5) * step + TANH_MIN
    return np.clip(y_q, TANH_MIN, TANH_MAX)


def tanh_discrete_forward(x, levels):
    return quantize(np.tanh(x), levels)


def tanh_discrete_backward(upstream, x):
    """
    Surrogate gradient: the derivative of the continuous tanh, quantization is ignored
    """
    return upstream * (1.0 - np.square(np.tanh(x)))


def _relu(x, levels=None):
    return np.maximum(x, 0.0)


def _sigmoid_derivative(x):
    s = expit(x)
    return s * (1.0 - s)


ACTIVATION_FUNCTIONS = {
    ActivationKind.SIGMOID: lambda x, levels=None: expit(x),
    ActivationKind.TANH: lambda x, levels=None: np.tanh(x),
    ActivationKind.RELU: _relu,
    ActivationKind.TANH_DISCRETE: tanh_discrete_forward,
}

# Elementwise derivative used by backward, evaluated at the cached forward input
ACTIVATION_DERIVATIVES = {
    ActivationKind.SIGMOID: _sigmoid_derivative,
    ActivationKind.TANH: lambda x: 1.0 - np.square(np.tanh(x)),
    ActivationKind.RELU: lambda x: (x > 0.0).astype(DTYPE),
    ActivationKind.TANH_DISCRETE: lambda x: tanh_discrete_backward(np.ones_like(x), x),
}


def activation_forward(x, kind, levels=None):
    return ACTIVATION_FUNCTIONS[ActivationKind(kind)](x, levels)


def activation_backward(upstream, x, kind):
    return upstream * ACTIVATION_DERIVATIVES[ActivationKind(kind)](x)


###########################################################################################
#       FULLY CONNECTED
###########################################################################################
def fc_forward(x, weights, bias):
    """
    Affine map x W + b without activation
    :param np.ndarray x: [batch, d_in]
    :param np.ndarray weights: [d_in, d_out]
    :param np.ndarray bias: [d_out]
    :return: [batch, d_out]
    """
    if bias.shape != (weights.shape[1],):
        raise exceptions.ShapeMismatchError(
            "Bias shape {} does not match weights {}".format(bias.shape, weights.shape)
        )
    return matmul(x, weights) + bias


def fc_backward(upstream, x, weights):
    """
    :return: (input gradient, weights gradient, bias gradient)
    """
    return matmul(upstream, weights.T), matmul(x.T, upstream), upstream.sum(axis=0)


###########################################################################################
#       1-D CONVOLUTION
###########################################################################################
class ConvSpec(object):
    """
    conv(W, d_in, d_out, s) with same padding
    """

    def __init__(self, window, d_in, d_out, stride):
        if min(window, d_in, d_out, stride) < 1:
            raise ValueError("Conv spec values must be positive: {}".format((window, d_in, d_out, stride)))
        self.window = int(window)
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.stride = int(stride)

    @property
    def kernel_shape(self):
        return (self.window, self.d_in, self.d_out)

    def output_length(self, length):
        return math.ceil(length / self.stride)

    def padding(self, length):
        """
        Same padding split as (left, right); the extra element goes right when the total is odd
        """
        total = max((self.output_length(length) - 1) * self.stride + self.window - length, 0)
        return total // 2, total - total // 2

    def __str__(self):
        return "conv({}, {}, {}, {})".format(self.window, self.d_in, self.d_out, self.stride)


class ConvCache(object):
    def __init__(self, input_shape, padded_shape, pad_left, windows):
        self.input_shape = input_shape
        self.padded_shape = padded_shape
        self.pad_left = pad_left
        # [batch, out_len, d_in, window] view over the padded input
        self.windows = windows


def conv1d_forward(x, spec, kernel, bias):
    """
    Strided cross-correlation along the length axis, summed over input depth
    :param np.ndarray x: [batch, length, d_in]
    :param ConvSpec spec:
    :param np.ndarray kernel: [window, d_in, d_out]
    :param np.ndarray bias: [d_out]
    :return: (output [batch, ceil(length/stride), d_out], ConvCache)
    """
    if x.ndim != 3 or x.shape[2] != spec.d_in:
        raise exceptions.ShapeMismatchError("{} expects [batch, length, {}], got {}".format(spec, spec.d_in, x.shape))
    if x.shape[1] < 1:
        raise exceptions.ShapeMismatchError("{} got a zero-length input".format(spec))
    if kernel.shape != spec.kernel_shape or bias.shape != (spec.d_out,):
        raise exceptions.ShapeMismatchError(
            "{} expects kernel {} and bias ({},), got {} and {}".format(
                spec, spec.kernel_shape, spec.d_out, kernel.shape, bias.shape
            )
        )
    pad_left, pad_right = spec.padding(x.shape[1])
    padded = np.pad(x, ((0, 0), (pad_left, pad_right), (0, 0)))
    windows = sliding_window_view(padded, spec.window, axis=1)[:, :: spec.stride]
    out = np.einsum("bodw,wde->boe", windows, kernel) + bias
    return out, ConvCache(x.shape, padded.shape, pad_left, windows)


def conv1d_backward(upstream, cache, spec, kernel):
    """
    :return: (input gradient, kernel gradient, bias gradient)
    """
    if cache is None:
        raise exceptions.LayerStateError("{} backward called without a cached forward".format(spec))
    out_len = upstream.shape[1]
    grad_bias = upstream.sum(axis=(0, 1))
    grad_kernel = np.einsum("bodw,boe->wde", cache.windows, upstream)
    grad_windows = np.einsum("boe,wde->bodw", upstream, kernel)
    grad_padded = np.zeros(cache.padded_shape, dtype=DTYPE)
    last = spec.stride * (out_len - 1) + 1
    for w in range(spec.window):
        grad_padded[:, w : w + last : spec.stride, :] += grad_windows[:, :, :, w]
    length = cache.input_shape[1]
    grad_x = grad_padded[:, cache.pad_left : cache.pad_left + length, :]
    return grad_x, grad_kernel, grad_bias


###########################################################################################
#       LAYER OBJECTS
###########################################################################################
class Layer(object):
    """
    Base class for layers. Forward caches what backward needs; backward reports parameter gradients
    in `self.grads` and never changes the parameters
    """

    # Identifier for the type of layer (key into the attributes registries)
    layer_type = None

    def __init__(self, **kwargs):
        """
        :param kwargs: hyper-attributes and parameter tensors named in the attributes registries
        """
        self.attribute_names = attributes.layer_attributes[self.layer_type]
        self.parameter_names = attributes.layer_parameters[self.layer_type]
        for attr_name in self.attribute_names + self.parameter_names:
            setattr(self, attr_name, kwargs.pop(attr_name))
        if kwargs:
            raise ValueError("Unexpected {} attributes: {}".format(type(self).__name__, kwargs))
        self.grads = {}
        self._cache = None

    def parameters(self):
        return [getattr(self, name) for name in self.parameter_names]

    def gradients(self):
        if self.parameter_names and not self.grads:
            raise exceptions.LayerStateError("{} has no gradients, run backward first".format(self))
        return [self.grads[name] for name in self.parameter_names]

    def forward(self, x):
        raise NotImplementedError()

    def backward(self, upstream):
        raise NotImplementedError()

    def _require_cache(self):
        if self._cache is None:
            raise exceptions.LayerStateError("{} backward called without a matching forward".format(self))
        return self._cache

    def describe(self):
        """Checkpoint descriptor: type, hyper-attributes and flat row-major parameters"""
        descriptor = {"type": self.layer_type}
        for attr_name in self.attribute_names:
            value = getattr(self, attr_name)
            descriptor[attr_name] = value.value if isinstance(value, enum.Enum) else value
        for param_name in self.parameter_names:
            descriptor[param_name] = getattr(self, param_name).ravel().tolist()
        return descriptor

    def __str__(self):
        return "{}({})".format(
            type(self).__name__, ", ".join("{}={}".format(a, getattr(self, a)) for a in self.attribute_names)
        )

    def display_details(self):
        return "{} with parameters: {}".format(
            self, {name: getattr(self, name).shape for name in self.parameter_names}
        )


class FullyConnected(Layer):
    layer_type = "fully_connected"

    def __init__(self, d_in, d_out, weights=None, bias=None):
        weights = np.zeros((d_in, d_out), dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE)
        bias = zero_bias(d_out) if bias is None else np.asarray(bias, dtype=DTYPE)
        super().__init__(d_in=d_in, d_out=d_out, weights=weights.reshape(d_in, d_out), bias=bias.reshape(d_out))

    @classmethod
    def initialised(cls, d_in, d_out, rng):
        return cls(d_in, d_out, weights=xavier_init(d_in, d_out, rng))

    def forward(self, x):
        self._cache = x
        return fc_forward(x, self.weights, self.bias)

    def backward(self, upstream):
        x = self._require_cache()
        grad_x, grad_w, grad_b = fc_backward(upstream, x, self.weights)
        self.grads = {"weights": grad_w, "bias": grad_b}
        return grad_x


class Conv1D(Layer):
    """
    Convolution over [batch, length, depth]. A 2-D input [batch, length] is read as depth 1
    """

    layer_type = "conv1d"

    def __init__(self, window, d_in, d_out, stride, kernel=None, bias=None):
        self.spec = ConvSpec(window, d_in, d_out, stride)
        kernel = np.zeros(self.spec.kernel_shape, dtype=DTYPE) if kernel is None else np.asarray(kernel, dtype=DTYPE)
        bias = zero_bias(d_out) if bias is None else np.asarray(bias, dtype=DTYPE)
        super().__init__(
            window=window,
            d_in=d_in,
            d_out=d_out,
            stride=stride,
            kernel=kernel.reshape(self.spec.kernel_shape),
            bias=bias.reshape(d_out),
        )

    @classmethod
    def initialised(cls, window, d_in, d_out, stride, rng):
        kernel = xavier_init(window * d_in, window * d_out, rng, shape=(window, d_in, d_out))
        return cls(window, d_in, d_out, stride, kernel=kernel)

    def forward(self, x):
        input_shape = x.shape
        if x.ndim == 2:
            x = x[:, :, np.newaxis]
        out, cache = conv1d_forward(x, self.spec, self.kernel, self.bias)
        self._cache = (input_shape, cache)
        return out

    def backward(self, upstream):
        input_shape, cache = self._require_cache()
        grad_x, grad_kernel, grad_bias = conv1d_backward(upstream, cache, self.spec, self.kernel)
        self.grads = {"kernel": grad_kernel, "bias": grad_bias}
        return grad_x.reshape(input_shape)


class Activation(Layer):
    layer_type = "activation"

    def __init__(self, kind, levels=None):
        kind = ActivationKind(kind)
        if kind is ActivationKind.TANH_DISCRETE:
            if levels is None or levels < 2:
                raise ValueError("Discrete tanh needs levels >= 2, got {}".format(levels))
            levels = int(levels)
        else:
            levels = None
        super().__init__(kind=kind, levels=levels)

    def forward(self, x):
        self._cache = x
        return activation_forward(x, self.kind, self.levels)

    def backward(self, upstream):
        x = self._require_cache()
        check_same_shape(upstream, x, "{} backward".format(self))
        return activation_backward(upstream, x, self.kind)

    def __str__(self):
        if self.levels:
            return "{}({}, L={})".format(type(self).__name__, self.kind.value, self.levels)
        return "{}({})".format(type(self).__name__, self.kind.value)


layer_classes = {layer_class.layer_type: layer_class for layer_class in (FullyConnected, Conv1D, Activation)}


def layer_from_descriptor(descriptor):
    """
    Rebuild a layer from its checkpoint descriptor
    :param dict descriptor: as produced by Layer.describe
    :return: Layer
    """
    descriptor = dict(descriptor)
    layer_type = descriptor.pop("type", None)
    if layer_type not in layer_classes:
        raise exceptions.CheckpointError('Unknown layer type: "{}"'.format(layer_type))
    expected = set(attributes.layer_attributes[layer_type] + attributes.layer_parameters[layer_type])
    if set(descriptor) != expected:
        raise exceptions.CheckpointError(
            "{} descriptor has fields {}, expected {}".format(layer_type, sorted(descriptor), sorted(expected))
        )
    try:
        return layer_classes[layer_type](**descriptor)
    except (ValueError, TypeError) as e:
        raise exceptions.CheckpointError("Invalid {} descriptor: {}".format(layer_type, e))
