"""Exception hierarchy shared by every module."""


class CollapseLabError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(CollapseLabError, ValueError):
    pass


class DimensionError(CollapseLabError, ValueError):
    pass


class SingularMatrix(CollapseLabError, ValueError):
    pass


class InvalidCovariance(CollapseLabError, ValueError):
    pass


class NeedsNegatives(CollapseLabError, ValueError):
    pass


class UnsupportedInfiniteKappa(CollapseLabError, ValueError):
    pass


class EmptyMask(CollapseLabError, ValueError):
    pass


class EmptyGrid(CollapseLabError, ValueError):
    pass


class NumericFailure(CollapseLabError, RuntimeError):
    """Failures that map to CLI exit code 3."""


class SingularSigma(NumericFailure):
    pass


class Diverged(NumericFailure):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class NotConverged(CollapseLabError, RuntimeError):
    pass


class ConfigError(CollapseLabError, ValueError):
    pass
