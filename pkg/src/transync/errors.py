"""Exception hierarchy shared by all transync modules."""

from __future__ import annotations


class TransyncError(Exception):
    """Base class for every error raised by this package."""


class ContractError(TransyncError, ValueError):
    """An argument violates a documented precondition (shape, dimension, range)."""


class IncompleteSetError(ContractError):
    """A pairwise transform set is missing one or more of its k*k entries."""


class ConfigError(ContractError):
    """An experiment or CLI configuration is invalid.

    ``field`` names the offending configuration key when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SingularTransformError(TransyncError, ArithmeticError):
    """A matrix that must be inverted is singular or too ill-conditioned."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


class DegenerateSolutionError(TransyncError):
    """Synchronisation produced no usable gauge block."""


class UnderdeterminedError(TransyncError):
    """Two point clouds share too few points for an alignment.

    ``pair`` holds the indices of the offending clouds when the error comes
    from a multi-shape routine.
    """

    def __init__(self, message: str, pair: tuple | None = None):
        if pair is not None:
            message = f"pair {pair}: {message}"
        super().__init__(message)
        self.pair = pair


class DegenerateCloudError(TransyncError):
    """A point cloud has zero spread over the points used for alignment."""


class InfeasibleDrawError(TransyncError):
    """A random corruption could not satisfy its feasibility rule within budget."""
