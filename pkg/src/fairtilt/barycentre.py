"""KL barycentres of pricing measures and barycentric weight selection.

The measure minimising a pi-weighted sum of KL divergences to given member
measures has weights proportional to the geometric mean of the member
weights, prod r_i^pi_i, globally renormalised. The log of the normaliser
is a Jensen gap: minus it is the constant by which the weighted divergence
to the members exceeds the divergence to the barycentre itself, strictly
positive unless all members coincide.

The expectation-constrained variant multiplies the geometric mean by
exp(-lambda y) with lambda chosen so the loss expectation matches the
sampling measure. Because the correction reweights globally, premia under
it must be evaluated with recomputed ranks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .solver import SolverOptions, solve_lambda
from .tilt import MeasureWeights, kl_divergence


@dataclass(frozen=True)
class BarycentreWeights:
    """Member weights pi: non-negative, summing to one."""

    pi: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.pi, dtype=float)
        if np.any(p < 0.0):
            raise ValueError("barycentric weights must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"barycentric weights sum to {p.sum()!r}, not 1")


@dataclass(frozen=True)
class BarycentreResult:
    weights: MeasureWeights
    pi: BarycentreWeights
    lam: float
    jensen_constant: float
    member_divergences: tuple[float, ...]
    kl: float


def _log_geometric_mean(members: list[np.ndarray], pi: np.ndarray) -> np.ndarray:
    out = np.zeros_like(members[0], dtype=float)
    for r, weight in zip(members, pi):
        if weight == 0.0:
            continue
        with np.errstate(divide="ignore"):
            out = out + weight * np.log(r)
    return out


def pure_barycentre(members: list[MeasureWeights], pi: BarycentreWeights) -> MeasureWeights:
    """Normalised geometric mean of the member weights.

    A member with zero barycentric weight drops out entirely; a state where
    any contributing member has zero weight keeps zero weight (KL support
    preservation).
    """
    arrays = [np.asarray(m.r, dtype=float) for m in members]
    p = np.asarray(pi.pi, dtype=float)
    if len(arrays) != p.shape[0]:
        raise ValueError("one barycentric weight per member required")
    logw = _log_geometric_mean(arrays, p)
    log_mean = logsumexp(logw) - np.log(logw.shape[0])
    with np.errstate(invalid="ignore"):
        r = np.exp(logw - log_mean)
    r = np.where(np.isfinite(logw), r, 0.0)
    return MeasureWeights(r=r, bins=None)


def jensen_constant(members: list[MeasureWeights], pi: BarycentreWeights) -> float:
    """Minus the log normaliser of the geometric mean; zero iff members coincide."""
    arrays = [np.asarray(m.r, dtype=float) for m in members]
    p = np.asarray(pi.pi, dtype=float)
    logw = _log_geometric_mean(arrays, p)
    return float(np.log(logw.shape[0]) - logsumexp(logw))


def constrained_barycentre(
    y: np.ndarray,
    members: list[MeasureWeights],
    pi: BarycentreWeights,
    opts: SolverOptions = SolverOptions(),
) -> BarycentreResult:
    """Barycentre corrected to preserve the sampling loss expectation.

    Solves for the exponential correction exp(-lambda y) on top of the
    geometric mean, renormalises globally, and reports the Jensen constant
    together with the KL divergence of the result from each member.
    """
    base = pure_barycentre(members, pi)
    lam = solve_lambda(y, base.r, opts)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.where(base.r > 0.0, np.log(np.where(base.r > 0.0, base.r, 1.0)), -np.inf)
    logw = logw - lam * (y - y.mean())
    log_mean = logsumexp(logw) - np.log(y.shape[0])
    r = np.where(np.isfinite(logw), np.exp(logw - log_mean), 0.0)
    weights = MeasureWeights(r=r, bins=None)
    member_divs = tuple(kl_divergence(weights, m) for m in members)
    return BarycentreResult(
        weights=weights,
        pi=pi,
        lam=lam,
        jensen_constant=jensen_constant(members, pi),
        member_divergences=member_divs,
        kl=kl_divergence(weights),
    )


@dataclass(frozen=True)
class WeightSearchResult:
    weights: BarycentreWeights
    objective: float
    evaluations: tuple[tuple[float, float], ...]


def proportional_reduction_gap(
    xi_reference: np.ndarray, xi_candidate: np.ndarray
) -> float:
    """Squared mismatch between the two relative sensitivity reductions."""
    ref = np.asarray(xi_reference, dtype=float)
    cand = np.asarray(xi_candidate, dtype=float)
    if ref.shape != (2,) or cand.shape != (2,):
        raise ValueError("weight selection is defined for exactly two members")
    if np.any(ref <= 0.0):
        raise ValueError("reference sensitivities must be positive")
    red = np.abs(ref - cand) / ref
    return float((red[0] - red[1]) ** 2)


def optimal_weights(
    xi_reference: np.ndarray,
    evaluator,
    grid: int = 11,
    width: float = 0.01,
) -> WeightSearchResult:
    """Barycentric weights equalising the relative sensitivity reductions.

    ``evaluator(pi1)`` returns the aggregated sensitivities (xi_1, xi_2)
    of the constrained barycentre with weights (pi1, 1 - pi1). The
    objective is scanned on a uniform grid over [0, 1] and the best cell
    refined by golden-section search down to the requested width.
    Evaluator failures at grid points are skipped.
    """
    cache: dict[float, float] = {}

    def objective(pi1: float) -> float:
        key = round(float(pi1), 9)
        if key not in cache:
            cache[key] = proportional_reduction_gap(xi_reference, evaluator(key))
        return cache[key]

    grid_points = np.linspace(0.0, 1.0, grid)
    best_idx = None
    best_val = np.inf
    for idx, p in enumerate(grid_points):
        try:
            val = objective(float(p))
        except Exception as exc:
            warnings.warn(f"weight search skipped pi1={p:.3f}: {exc}", stacklevel=2)
            continue
        if val < best_val:
            best_idx, best_val = idx, val
    if best_idx is None:
        raise RuntimeError("weight search failed at every grid point")

    lo = float(grid_points[max(best_idx - 1, 0)])
    hi = float(grid_points[min(best_idx + 1, grid - 1)])
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    candidates = sorted(cache.items(), key=lambda kv: kv[1])
    pi1, best = candidates[0]
    return WeightSearchResult(
        weights=BarycentreWeights((pi1, 1.0 - pi1)),
        objective=best,
        evaluations=tuple(sorted(cache.items())),
    )
