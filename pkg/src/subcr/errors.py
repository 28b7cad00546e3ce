"""Exception hierarchy. CLI maps usage/IO errors to exit code 2, runtime/numerical to 1."""


class SubcrError(Exception):
    """Base class for all package errors."""


class MalformedInputError(SubcrError):
    """A data file could not be parsed; message names the file and line."""


class DimensionError(SubcrError):
    """Shape/length mismatch between two structures; message names both."""


class CapacityError(SubcrError):
    """A size guard was exceeded (dense-solve cap, injection capacity, ...)."""


class NumericalError(SubcrError):
    """NaN/Inf showed up, or a linear system could not be solved."""


class ConvergenceError(SubcrError):
    """An iterative method exhausted its budget; carries the residual."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class ConfigError(SubcrError):
    """Invalid configuration value or config-file syntax."""


class UndefinedMetricError(SubcrError):
    """Metric is undefined for the given inputs (e.g. single-class labels)."""


class UsageError(SubcrError):
    """An API was called outside its contract (e.g. backward on a non-scalar)."""
