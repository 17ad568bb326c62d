"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """A covariate value lies outside the support of every conditional law."""


class UnsupportedLawError(ValueError):
    """An analytic form (cdf, quantile, rank) is unavailable for this model."""


class DatasetFormatError(ValueError):
    """A dataset file failed to parse; message carries line/column context."""


class BinningError(ValueError):
    """A rank bin received no samples, so per-bin normalisation is undefined."""


class TiltOverflow(RuntimeError):
    """Tilt exponent left the safe range; the solver reads this as divergence.

    Carries the offending parameters so diagnostics can name the direction.
    """

    def __init__(self, message: str, params=None):
        super().__init__(message)
        self.params = params


class Infeasible(RuntimeError):
    """The projection's constraint set is empty.

    ``certificate`` is a separating functional z with z'A <= 0 on every
    state but z'b > 0, proving no probability vector satisfies the
    constraints.
    """

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ReplicationError(RuntimeError):
    """Every replicate of a solve was rejected; carries the per-run log."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log or []
