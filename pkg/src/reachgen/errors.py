"""Exception types raised across the package."""


class ReachGenError(Exception):
    """Base class for all package errors."""


class DegenerateRotationError(ReachGenError):
    """6D rotation input is collinear or near-zero and cannot be decoded."""


class InvalidRotationError(ReachGenError):
    """Matrix input is not orthonormal / right-handed within tolerance."""


class DimensionMismatchError(ReachGenError):
    """Pose, skeleton, or network dimensions disagree."""


class NumericFault(ReachGenError):
    """NaN/Inf appeared in a computation; carries a location hint."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where})")
        self.where = where


class TapeReuseError(ReachGenError):
    """A gradient tape was walked twice."""


class SkipWindow(ReachGenError):
    """The sequence is too short for the requested training window."""


class InfeasibleTargetError(ReachGenError):
    """A reach target could not be realized within the resample cap."""


class TimeScaleError(ReachGenError):
    """Rescaling target frames collapsed the goal ordering."""


class ModelMismatchError(ReachGenError):
    """Record/checkpoint hash does not match the supplied model."""


class CorruptFileError(ReachGenError):
    """Container file is truncated or fails validation."""


class VersionMismatchError(ReachGenError):
    """Container file was written by an incompatible format version."""
