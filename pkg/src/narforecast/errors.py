"""Exception hierarchy shared by every narforecast module."""


class NarError(Exception):
    """Base class for all errors raised by narforecast."""


class DataError(NarError, ValueError):
    """Malformed, missing or insufficient input data."""


class ConfigError(NarError, ValueError):
    """Invalid hyperparameters, split fractions or command-line options."""


class TrainingDivergence(NarError, RuntimeError):
    """A trainer produced a non-finite loss or weight vector.

    Parameters
    ----------
    epoch : int
        Epoch at which the non-finite value appeared.
    message : str
        Human readable detail.
    """

    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")
