import json
import logging

import numpy as np

from advmod import exceptions
from advmod.nn import attributes
from advmod.nn.layers import Activation, ActivationKind, Conv1D, FullyConnected, layer_from_descriptor

log = logging.getLogger(__name__)

ROLES = ("alice", "bob", "eve")

# Shared transform stage after the mixing layer(s): (window, d_in, d_out, stride)
CONV_STACK = (
    (4, 1, 2, 1),
    (2, 2, 4, 2),
    (1, 4, 4, 1),
    (1, 4, 1, 1),
)

CHECKPOINT_VERSION = 1


class Network(object):
    """
    Ordered layer stack for one participant. Input is [batch, input_width], output [batch, n]
    """

    def __init__(self, role, n, layers, output_activation):
        """
        :param str role: alice, bob or eve
        :param int n: block length N
        :param list layers: ordered Layer instances
        :param Activation output_activation: the final layer's activation (also the last entry of layers)
        """
        if role not in ROLES:
            raise ValueError('Unknown network role: "{}"'.format(role))
        self.role = role
        self.n = n
        self.layers = layers
        self.output_activation = output_activation
        self.input_width = attributes.network_input_multiplier[role] * n
        self.output_width = n
        self._output_shape = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.input_width:
            raise exceptions.ShapeMismatchError(
                "{} expects input [batch, {}], got {}".format(self, self.input_width, x.shape)
            )
        out = x
        for layer in self.layers:
            out = layer.forward(out)
        self._output_shape = out.shape
        return out.reshape(out.shape[0], -1)

    def backward(self, upstream):
        """
        Backpropagate and store parameter gradients on every layer. Parameters are left untouched
        :param np.ndarray upstream: gradient wrt the [batch, n] output
        :return: gradient wrt the input
        """
        if self._output_shape is None:
            raise exceptions.LayerStateError("{} backward called without a matching forward".format(self))
        grad = upstream.reshape(self._output_shape)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [param for layer in self.layers for param in layer.parameters()]

    def gradients(self):
        return [grad for layer in self.layers for grad in layer.gradients()]

    def snapshot(self):
        """Copies of all parameters, used to check freezing"""
        return [param.copy() for param in self.parameters()]

    def matches_snapshot(self, snapshot):
        return len(snapshot) == len(self.parameters()) and all(
            np.array_equal(param, saved) for param, saved in zip(self.parameters(), snapshot)
        )

    ###########################################################################################
    #       CHECKPOINTS
    ###########################################################################################
    def to_checkpoint(self):
        return {
            "version": CHECKPOINT_VERSION,
            "role": self.role,
            "n": self.n,
            "activation": {"kind": self.output_activation.kind.value, "levels": self.output_activation.levels},
            "layers": [layer.describe() for layer in self.layers],
        }

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_checkpoint(), f)
        log.debug("Saved {} to {}".format(self, path))

    @classmethod
    def from_checkpoint(cls, document):
        """
        Rebuild a network from a checkpoint document
        :param dict document:
        :return: Network
        """
        try:
            role = document["role"]
            n = int(document["n"])
            layer_descriptors = document["layers"]
        except (KeyError, TypeError, ValueError) as e:
            raise exceptions.CheckpointError("Checkpoint is missing a field: {}".format(e))
        if role not in ROLES:
            raise exceptions.CheckpointError('Checkpoint has unknown role: "{}"'.format(role))
        layers = [layer_from_descriptor(descriptor) for descriptor in layer_descriptors]
        if not layers or not isinstance(layers[-1], Activation):
            raise exceptions.CheckpointError("{} checkpoint must end with an activation layer".format(role))
        declared = document.get("activation") or {}
        if declared.get("kind", layers[-1].kind.value) != layers[-1].kind.value:
            raise exceptions.CheckpointError(
                '{} checkpoint declares activation "{}" but ends with {}'.format(role, declared["kind"], layers[-1])
            )
        network = cls(role, n, layers, layers[-1])
        network._check_widths()
        return network

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                document = json.load(f)
        except OSError as e:
            raise exceptions.CheckpointError("Could not read checkpoint {}: {}".format(path, e))
        except ValueError as e:
            raise exceptions.CheckpointError("Corrupt checkpoint {}: {}".format(path, e))
        network = cls.from_checkpoint(document)
        log.debug("Loaded {} from {}".format(network, path))
        return network

    def _check_widths(self):
        """Run a zero batch through the stack to confirm input and output widths"""
        try:
            out = self.forward(np.zeros((1, self.input_width)))
        except exceptions.ShapeMismatchError as e:
            raise exceptions.CheckpointError("{} layers are inconsistent: {}".format(self, e))
        if out.shape != (1, self.output_width):
            raise exceptions.CheckpointError(
                "{} produces width {}, expected {}".format(self, out.shape[1], self.output_width)
            )

    def __str__(self):
        return "Network: {} (N={})".format(self.role, self.n)

    def display_details(self):
        return "{} with layers: {}".format(self, [str(layer) for layer in self.layers])


def build_network(role, n, rng, output_activation=ActivationKind.SIGMOID, levels=None):
    """
    Build one participant's mix-and-transform network with Xavier weights and zero biases
    Alice: FC(2N,2N) linear, conv stack ending in tanh or discrete tanh
    Bob: FC(2N,2N) relu, conv stack ending in sigmoid
    Eve: FC(N,2N) relu, FC(2N,2N) relu, conv stack ending in sigmoid
    :param str role: alice, bob or eve
    :param int n: block length, even
    :param np.random.Generator rng: initialisation stream
    :param ActivationKind output_activation: activation after the last conv layer
    :param int levels: level count when the output activation is the discrete tanh
    :return: Network
    """
    if role not in ROLES:
        raise ValueError('Unknown network role: "{}"'.format(role))
    if n < 2 or n % 2:
        raise exceptions.ConfigurationError("Block length N must be even and >= 2, got {}".format(n))
    width = 2 * n
    if role == "alice":
        layers = [FullyConnected.initialised(width, width, rng)]
    elif role == "bob":
        layers = [FullyConnected.initialised(width, width, rng), Activation(ActivationKind.RELU)]
    else:
        layers = [
            FullyConnected.initialised(n, width, rng),
            Activation(ActivationKind.RELU),
            FullyConnected.initialised(width, width, rng),
            Activation(ActivationKind.RELU),
        ]
    for i, (window, d_in, d_out, stride) in enumerate(CONV_STACK):
        layers.append(Conv1D.initialised(window, d_in, d_out, stride, rng))
        if i < len(CONV_STACK) - 1:
            layers.append(Activation(ActivationKind.SIGMOID))
    output = Activation(output_activation, levels=levels)
    layers.append(output)
    network = Network(role, n, layers, output)
    log.debug("Built {}".format(network.display_details()))
    return network
