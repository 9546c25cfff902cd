"""Exception types raised across the package."""

import numpy as np


class FedBNRError(Exception):
    """Base class for every error raised by fedbnr."""


class NotPositiveDefinite(FedBNRError, np.linalg.LinAlgError):
    """A Cholesky pivot was not strictly positive."""


class DimensionMismatch(FedBNRError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    """Input row count does not match the network input dimension."""


class UnsupportedPrimitive(FedBNRError, TypeError):
    """An operation outside the differentiable primitive set touched a Var."""


class NonFiniteLoss(FedBNRError, FloatingPointError):
    pass


class LayoutMismatch(FedBNRError, ValueError):
    pass


class NoKdData(FedBNRError, ValueError):
    pass


class UnknownMode(FedBNRError, ValueError):
    pass


class ParseError(FedBNRError, ValueError):
    pass


class MissingTarget(FedBNRError, KeyError):
    pass


class TooFewRows(FedBNRError, ValueError):
    pass


class DegenerateFeature(FedBNRError, ValueError):
    pass


class EmptyClient(FedBNRError, ValueError):
    pass


class EmptyInput(FedBNRError, ValueError):
    pass


class TooFewPairs(FedBNRError, ValueError):
    pass


class ConfigError(FedBNRError, ValueError):
    """Invalid experiment configuration; the message starts with the field path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


__all__ = [
    "FedBNRError",
    "NotPositiveDefinite",
    "DimensionMismatch",
    "ShapeMismatch",
    "UnsupportedPrimitive",
    "NonFiniteLoss",
    "LayoutMismatch",
    "NoKdData",
    "UnknownMode",
    "ParseError",
    "MissingTarget",
    "TooFewRows",
    "DegenerateFeature",
    "EmptyClient",
    "EmptyInput",
    "TooFewPairs",
    "ConfigError",
]
