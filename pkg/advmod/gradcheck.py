"""
Finite-difference verification of every layer's backward pass
"""
import logging

import numpy as np

from advmod import exceptions
from advmod.numerics import finite_diff_grad, make_rng, relative_error
from advmod.nn.layers import Activation, ActivationKind, Conv1D, FullyConnected
from advmod.nn.networks import CONV_STACK

log = logging.getLogger(__name__)

TOLERANCE = 1e-5
STEP = 1e-5
# Inputs to relu are kept at least this far from the kink
RELU_MARGIN = 0.1
SURROGATE_LEVELS = 13


class GradientCheckResult(object):
    def __init__(self, label, worst_error, tensor_name, coordinate):
        self.label = label
        self.worst_error = worst_error
        self.tensor_name = tensor_name
        self.coordinate = coordinate

    @property
    def passed(self):
        return self.worst_error < TOLERANCE

    def __str__(self):
        return "{}: worst relative error {:.3e} in {} at {} ({})".format(
            self.label, self.worst_error, self.tensor_name, self.coordinate, "ok" if self.passed else "FAILED"
        )


class GradientCase(object):
    """
    A layer, an input, and optionally the smooth function its backward is meant to differentiate
    """

    def __init__(self, label, layer, x, reference=None):
        self.label = label
        self.layer = layer
        self.x = x
        self.reference = reference


def check_layer(case, rng, h=STEP):
    """
    Compare the analytic input and parameter gradients of a layer against central differences of
    sum(upstream * layer(x)) for a random upstream gradient
    :param GradientCase case:
    :param np.random.Generator rng:
    :param float h:
    :return: GradientCheckResult for the worst tensor
    """
    layer = case.layer
    forward = case.reference or layer.forward
    upstream = rng.standard_normal(layer.forward(case.x).shape)
    analytic = {"input": layer.backward(upstream)}
    analytic.update({name: grad.copy() for name, grad in layer.grads.items()})

    numeric = {"input": finite_diff_grad(lambda v: np.sum(upstream * forward(v)), case.x, h)}
    for name in layer.parameter_names:
        param = getattr(layer, name)

        def objective(value, param=param):
            saved = param.copy()
            param[...] = value
            result = np.sum(upstream * forward(case.x))
            param[...] = saved
            return result

        numeric[name] = finite_diff_grad(objective, param, h)

    worst = None
    for name, grad in analytic.items():
        error = relative_error(grad, numeric[name])
        if worst is None or error > worst.worst_error:
            coordinate = np.unravel_index(np.argmax(np.abs(grad - numeric[name])), grad.shape)
            worst = GradientCheckResult(case.label, error, name, tuple(int(i) for i in coordinate))
    log.debug(str(worst))
    return worst


def default_cases(rng):
    """One case per layer kind, with each conv spec of the network stack and every activation kind"""
    fc = FullyConnected.initialised(6, 4, rng)
    fc.bias[...] = rng.standard_normal(fc.bias.shape)
    cases = [GradientCase("fully_connected", fc, rng.standard_normal((3, 6)))]
    for window, d_in, d_out, stride in CONV_STACK:
        conv = Conv1D.initialised(window, d_in, d_out, stride, rng)
        conv.bias[...] = rng.standard_normal(conv.bias.shape)
        cases.append(GradientCase("conv1d{}".format(conv.spec), conv, rng.standard_normal((2, 9, d_in))))

    relu_input = rng.uniform(RELU_MARGIN, 2.0, size=(3, 5)) * rng.choice([-1.0, 1.0], size=(3, 5))
    cases.extend(
        [
            GradientCase("sigmoid", Activation(ActivationKind.SIGMOID), rng.standard_normal((3, 5))),
            GradientCase("tanh", Activation(ActivationKind.TANH), rng.standard_normal((3, 5))),
            GradientCase("relu", Activation(ActivationKind.RELU), relu_input),
            # Surrogate gradient is checked against the continuous tanh
            GradientCase(
                "tanh_discrete",
                Activation(ActivationKind.TANH_DISCRETE, levels=SURROGATE_LEVELS),
                rng.standard_normal((3, 5)),
                reference=np.tanh,
            ),
        ]
    )
    return cases


def run_gradient_suite(seed=0):
    """
    :param int seed: seeds inputs, weights and upstream gradients
    :return: list of GradientCheckResult, one per case
    """
    rng = make_rng(seed)
    results = [check_layer(case, rng) for case in default_cases(rng)]
    for result in results:
        log.info(str(result))
    return results


def assert_gradients(results):
    failed = [result for result in results if not result.passed]
    if failed:
        raise exceptions.GradientCheckError("; ".join(str(result) for result in failed))
