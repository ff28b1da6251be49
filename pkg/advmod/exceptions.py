class AdvModError(Exception):
    """
    Base class for all errors raised by the package
    """

    pass


class ShapeMismatchError(AdvModError):
    """
    When tensor shapes are not congruent for an operation
    """

    pass


class NonFiniteError(AdvModError):
    """When a tensor or scalar contains NaN or Inf"""

    pass


class InitialisationError(AdvModError):
    pass


class LayerStateError(AdvModError):
    """Backward pass requested without a matching forward pass"""

    pass


class ModemError(AdvModError):
    pass


class ChannelError(AdvModError):
    pass


class ChannelRealizationError(ChannelError):
    """
    When a channel realization was altered between forward and backward pass
    """

    pass


class ConfigurationError(AdvModError):
    pass


class CheckpointError(AdvModError):
    """Missing, corrupt or inconsistent network checkpoint"""

    pass


class KeyPoolError(AdvModError):
    pass


class NonFiniteLossError(AdvModError):
    """
    Raised when a training loss is not finite. Records where training stopped
    """

    def __init__(self, loss_name, epoch, phase):
        self.loss_name = loss_name
        self.epoch = epoch
        self.phase = phase
        super().__init__('Non-finite loss "{}" at epoch {} during phase {}'.format(loss_name, epoch, phase))


class EvaluationError(AdvModError):
    pass


class GradientCheckError(AdvModError):
    pass
