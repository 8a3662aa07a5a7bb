"""Exception and warning types shared across the package."""

from __future__ import annotations


class HazardIVError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HazardIVError):
    """Bad caller input: missing column bindings, unknown flags, bad paths."""


class ValidationError(HazardIVError):
    """Data fails a hard invariant (bad status codes, missing values, no events)."""


class IdentificationError(HazardIVError):
    """A fit cannot be identified (constant treatment/instrument, rank-deficient design)."""


class UndefinedScoreError(HazardIVError):
    """The partial score is undefined: zero total weight in a risk set at an event time."""


class NoSolutionError(HazardIVError):
    """The estimating equation has no root on the (expanded) search bracket.

    Carries the final bracket endpoints and the score values there so callers
    can report why the solve failed.
    """

    def __init__(self, message, bracket=None, scores=None):
        super().__init__(message)
        self.bracket = bracket
        self.scores = scores


class ConvergenceError(HazardIVError):
    """Root search did not meet tolerance within the iteration budget."""

    def __init__(self, message, bracket=None, last_beta=None, last_score=None):
        super().__init__(message)
        self.bracket = bracket
        self.last_beta = last_beta
        self.last_score = last_score


class WeakInstrumentError(HazardIVError):
    """Score derivative at the root is numerically zero; variance is unusable."""


class UnsupportedError(HazardIVError):
    """Requested operation needs a data shape this package does not support."""


class BootstrapUnreliableError(HazardIVError):
    """More than half of the bootstrap replicates failed to produce an estimate."""


class IdentificationWarning(UserWarning):
    """Constant treatment or instrument column: IV fits on this data will fail."""


class WeakInstrumentWarning(UserWarning):
    """First-stage F below the conventional threshold of 10."""


class SeparationWarning(UserWarning):
    """Logistic fit detected (quasi-)separation; coefficients from last stable iterate."""


class MultipleRootsWarning(UserWarning):
    """Estimating equation changed sign more than once on the search grid."""
