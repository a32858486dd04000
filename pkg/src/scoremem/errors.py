"""Exception hierarchy shared across the package."""


class ScoreMemError(Exception):
    """Base class for all package errors."""


class DomainError(ScoreMemError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularTimeError(DomainError):
    """A score or density was requested at a time where sigma(t) = 0."""


class InvalidDatasetError(ScoreMemError, ValueError):
    pass


class UndefinedObservationError(ScoreMemError, KeyError):
    """The conditional empirical score is undefined off the observed set."""

    def __str__(self):
        return str(self.args[0]) if self.args else "observation not in dataset"


class DivergenceError(ScoreMemError, RuntimeError):
    """A trajectory left the trust region or became non-finite.

    Attributes
    ----------
    node : int
        Index of the last node at which every state was finite and bounded.
    t : float
        Time of that node.
    sample_ids : list of int
        Indices (within the batch) of the offending trajectories.
    """

    def __init__(self, message, node=None, t=None, sample_ids=None, state=None):
        super().__init__(message)
        self.node = node
        self.t = t
        self.sample_ids = list(sample_ids) if sample_ids is not None else []
        self.state = state


class NotCollapsedError(ScoreMemError, ValueError):
    """Trajectory terminal is not within tau of any data point."""


class TrainingDivergedError(ScoreMemError, RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(ScoreMemError, ValueError):
    """Experiment configuration is malformed or references unknown names."""
