"""Exponentially tilted measure changes with rank-bin normalisation.

The minimally divergent measure that removes protected sensitivities while
leaving the loss rank distribution untouched has density proportional to
exp(-eta . phi - eta_y y) against the sampling measure, normalised within
each rank bin rather than globally. Discretising the rank axis into B
equal-probability bins and dividing each sample's raw tilt by its bin mean
enforces a per-bin weight mean of exactly one, which is the finite-sample
statement that U stays uniform at bin resolution.

Weights are first-class: the KL divergence of the represented measure is
the plain sample mean of r log r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BinningError, TiltOverflow

MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class BinScheme:
    """B equal-probability rank bins; bin of u is min(floor(u B), B - 1)."""

    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("bin count must be at least 1")

    def assign(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.minimum((u * self.count).astype(np.int64), self.count - 1)


@dataclass(frozen=True)
class TiltParameters:
    """Multipliers of the tilt: one per score column, plus the expectation one."""

    eta: np.ndarray
    eta_expectation: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.eta, dtype=float), [self.eta_expectation]])


@dataclass(frozen=True)
class MeasureWeights:
    """Change of measure r against the sampling measure, mean one.

    ``bins`` records the normalisation: a BinScheme for rank-preserving
    per-bin tilts, None for globally normalised measures.
    """

    r: np.ndarray
    bins: BinScheme | None

    @property
    def n(self) -> int:
        return self.r.shape[0]


def tilt_exponents(phi_values: np.ndarray, y: np.ndarray, params: TiltParameters) -> np.ndarray:
    """The exponent -eta . phi_j - eta_y y_j, range-checked against overflow."""
    phi_values = np.asarray(phi_values, dtype=float)
    eta = np.asarray(params.eta, dtype=float)
    args = -(phi_values @ eta) - params.eta_expectation * np.asarray(y, dtype=float)
    worst = float(np.max(np.abs(args))) if args.size else 0.0
    if worst > MAX_EXPONENT:
        raise TiltOverflow(
            f"tilt exponent reached {worst:.1f}, beyond the safe range; "
            "no finite solution in this direction",
            params=params,
        )
    return args


def compute_weights(
    phi_values: np.ndarray,
    y: np.ndarray,
    u: np.ndarray,
    params: TiltParameters,
    bins: BinScheme,
) -> MeasureWeights:
    """Per-bin normalised tilt weights.

    raw_j = exp(-eta . phi_j - eta_y y_j), then r_j = raw_j / mean(raw over
    the rank bin of u_j). Every bin must be populated.
    """
    args = tilt_exponents(phi_values, y, params)
    raw = np.exp(args)
    b = bins.assign(u)
    counts = np.bincount(b, minlength=bins.count)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise BinningError(f"rank bin {empty} of {bins.count} received no samples")
    sums = np.bincount(b, weights=raw, minlength=bins.count)
    if np.any(sums <= 0.0):
        raise TiltOverflow(
            "tilt weights underflowed to zero throughout a rank bin", params=params
        )
    bin_means = sums / counts
    return MeasureWeights(r=raw / bin_means[b], bins=bins)


def compute_weights_global(
    phi_values: np.ndarray, y: np.ndarray, params: TiltParameters
) -> MeasureWeights:
    """Globally normalised tilt, the B = 1 case; for mean-kind distortions."""
    args = tilt_exponents(phi_values, y, params)
    raw = np.exp(args)
    return MeasureWeights(r=raw / raw.mean(), bins=None)


def kl_divergence(weights: MeasureWeights | np.ndarray, base: MeasureWeights | np.ndarray | None = None) -> float:
    """KL divergence of the measure from the sampling measure, (1/n) sum r log r.

    With ``base`` given, the divergence is taken against that measure
    instead: (1/n) sum r (log r - log r_base). Zero weights contribute
    zero through the x log x = 0 convention; negative weights are invalid.
    """
    r = weights.r if isinstance(weights, MeasureWeights) else np.asarray(weights, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("measure weights must be non-negative")
    if base is None:
        terms = np.where(r > 0.0, r * np.log(np.where(r > 0.0, r, 1.0)), 0.0)
        return float(np.mean(terms))
    rb = base.r if isinstance(base, MeasureWeights) else np.asarray(base, dtype=float)
    if np.any((r > 0.0) & (rb <= 0.0)):
        return float("inf")
    safe_r = np.where(r > 0.0, r, 1.0)
    safe_b = np.where(r > 0.0, rb, 1.0)
    terms = np.where(r > 0.0, r * (np.log(safe_r) - np.log(safe_b)), 0.0)
    return float(np.mean(terms))
