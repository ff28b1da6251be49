"""
Tensor arithmetic, seeded random streams, Xavier initialisation, the Adam optimizer and a
central finite-difference gradient used to verify every analytic backward pass.

Tensors are float64 numpy arrays. Random streams are numpy Generators on the PCG64 bit
generator seeded through a SeedSequence, so a given seed yields the same sequence on every
platform numpy supports.
"""
import logging
import math

import numpy as np

from advmod import exceptions

log = logging.getLogger(__name__)

DTYPE = np.float64

# Adam defaults of the published optimizer
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def make_rng(seed, *stream):
    """
    Create a reproducible random stream
    :param int seed: base seed
    :param int stream: optional extra words, used to derive independent sub-streams (e.g. per SNR index)
    :return: numpy Generator backed by PCG64
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *[int(s) for s in stream]])))


def check_finite(tensor, name="tensor"):
    """
    Raise if any value is NaN or Inf
    :param np.ndarray tensor:
    :param str name: name used in the error message
    :return: the tensor, unchanged
    """
    if not np.all(np.isfinite(tensor)):
        bad = np.argwhere(~np.isfinite(np.asarray(tensor)))
        first = tuple(int(i) for i in bad[0])
        raise exceptions.NonFiniteError(
            "{} contains {} non-finite values, first at index {}".format(name, len(bad), first)
        )
    return tensor


def check_same_shape(a, b, context):
    if np.shape(a) != np.shape(b):
        raise exceptions.ShapeMismatchError(
            "{}: shape {} does not match shape {}".format(context, np.shape(a), np.shape(b))
        )


def matmul(a, b):
    """
    Dense product of [m,k] and [k,n] tensors
    """
    if a.ndim != 2 or b.ndim != 2:
        raise exceptions.ShapeMismatchError("matmul expects 2-D tensors, got {} and {}".format(a.shape, b.shape))
    if a.shape[1] != b.shape[0]:
        raise exceptions.ShapeMismatchError(
            "matmul inner dimensions differ: {} x {}".format(a.shape, b.shape)
        )
    return check_finite(np.matmul(a, b, dtype=DTYPE), "matmul result")


def xavier_bound(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(fan_in, fan_out, rng, shape=None):
    """
    Uniform Xavier initialisation in [-b, b] with b = sqrt(6 / (fan_in + fan_out))
    :param int fan_in:
    :param int fan_out:
    :param np.random.Generator rng:
    :param tuple shape: shape of the returned tensor, defaults to (fan_in, fan_out). Conv kernels pass their own
    shape with fans computed from window and depths
    :return: np.ndarray
    """
    if fan_in < 1 or fan_out < 1:
        raise exceptions.InitialisationError(
            "Xavier initialisation needs positive fans, got fan_in={} fan_out={}".format(fan_in, fan_out)
        )
    bound = xavier_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out)).astype(DTYPE)


def zero_bias(width):
    return np.zeros(width, dtype=DTYPE)


###########################################################################################
#       ADAM
###########################################################################################
class AdamState(object):
    """
    Moment accumulators and step counter for a fixed list of parameter tensors
    """

    def __init__(self, shapes, learning_rate=0.001, beta1=ADAM_BETA1, beta2=ADAM_BETA2, epsilon=ADAM_EPSILON):
        if learning_rate <= 0:
            raise ValueError("Learning rate must be positive, got {}".format(learning_rate))
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1), got {}, {}".format(beta1, beta2))
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.first_moment = [np.zeros(shape, dtype=DTYPE) for shape in shapes]
        self.second_moment = [np.zeros(shape, dtype=DTYPE) for shape in shapes]

    @classmethod
    def for_parameters(cls, params, **kwargs):
        return cls([p.shape for p in params], **kwargs)

    def __str__(self):
        return "{}: t={} lr={} over {} tensors".format(
            type(self).__name__, self.t, self.learning_rate, len(self.first_moment)
        )


def adam_step(params, grads, state):
    """
    One Adam update with bias correction. Parameters are updated in place
    :param list params: parameter tensors
    :param list grads: gradient tensors, congruent with params
    :param AdamState state: mutated (moments and step counter)
    :return: (params, state)
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise exceptions.ShapeMismatchError(
            "Adam got {} parameters, {} gradients and state for {}".format(
                len(params), len(grads), len(state.first_moment)
            )
        )
    for i, (param, grad) in enumerate(zip(params, grads)):
        check_same_shape(param, grad, "Adam parameter {}".format(i))
        check_same_shape(param, state.first_moment[i], "Adam state {}".format(i))

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for param, grad, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        m_hat = m / correction1
        v_hat = v / correction2
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        check_finite(param, "parameter after Adam step {}".format(state.t))
    return params, state


###########################################################################################
#       GRADIENT VERIFICATION
###########################################################################################
def finite_diff_grad(f, x, h=1e-5):
    """
    Central finite-difference gradient of a scalar function
    :param callable f: maps a tensor shaped like x to a real number
    :param np.ndarray x: evaluation point (not modified)
    :param float h: step size
    :return: np.ndarray shaped like x
    """
    if h <= 0:
        raise ValueError("Finite difference step must be positive, got {}".format(h))
    point = np.array(x, dtype=DTYPE, copy=True)
    grad = np.zeros_like(point)
    flat_point = point.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat_point.size):
        original = flat_point[i]
        flat_point[i] = original + h
        f_plus = float(f(point))
        flat_point[i] = original - h
        f_minus = float(f(point))
        flat_point[i] = original
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise exceptions.NonFiniteError(
                "Function is not finite around coordinate {}: f(x+h)={}, f(x-h)={}".format(
                    tuple(int(j) for j in np.unravel_index(i, point.shape)), f_plus, f_minus
                )
            )
        flat_grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """
    Norm-wise relative error between two gradient tensors. Zero when both are zero
    """
    difference = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric))
    if scale == 0.0:
        return 0.0
    return float(difference / scale)
