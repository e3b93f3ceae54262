"""Exception hierarchy shared by every module of the package."""


class InvaseError(Exception):
    """Base class for all errors raised by uainvase."""


class ConfigurationError(InvaseError):
    """Inconsistent shapes, options or hyperparameters."""


class DataError(InvaseError):
    """Input values that cannot be used (NaN/Inf, wrong labels, ...)."""


class IngestionError(DataError):
    """A dataset file could not be parsed."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class UsageError(InvaseError):
    """An API was called out of contract (bad index, stale tape, ...)."""


class UndefinedMetricError(InvaseError):
    """A metric is undefined for the given labels (e.g. a single class)."""


class TrainingDivergence(InvaseError):
    """A non-finite value appeared during training.

    ``iteration`` is the failing step and ``last_good`` holds the most
    recent finite model snapshot, when one exists.
    """

    def __init__(self, message, iteration=None, layer=None, last_good=None):
        super().__init__(message)
        self.iteration = iteration
        self.layer = layer
        self.last_good = last_good
