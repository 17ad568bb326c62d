"""Multiplier solvers for sensitivity-constrained tilted measures.

The constraint system asks the tilted measure to zero every selected score
expectation and, optionally, to preserve the loss expectation. Writing W
for the matrix of constraint columns (scores, then the loss), the residual
of a multiplier vector is the bin-mass weighted average of the within-bin
tilt-weighted means of W minus its target, and its Jacobian is minus the
same average of within-bin weighted covariances. That covariance identity
makes damped Newton the natural solver: the matrix is symmetric positive
semi-definite, steps are cheap to assemble from bin counts, and a
backtracking line search keeps the residual norm strictly decreasing.

Constraints are solved on a normalised scale (each column divided by its
standard deviation) so one tolerance means the same thing for score and
expectation constraints. Divergence is a first-class outcome: multipliers
escaping their box or tilt exponents leaving the safe range produce a
non-converged result that names the direction, never a fake solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BinningError, ReplicationError, TiltOverflow
from .scenario import ConditionalSampleSet
from .sensitivity import PhiMatrix
from .tilt import BinScheme, MeasureWeights, TiltParameters, kl_divergence

MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 100
    damping: float = 0.5
    min_step: float = 2.0**-20
    eta_bound: float = 50.0
    replications: int = 50
    tol_accept: float = 1e-4
    # Sup-norm cap on one Newton step, in scaled multiplier units. Extreme
    # tilts flatten the residual far from the root; an uncapped step then
    # overshoots into the flat region and the line search cannot recover.
    max_step: float = 2.0


@dataclass(frozen=True)
class TiltedMeasure:
    """Outcome of a multiplier solve, converged or not."""

    params: TiltParameters
    indices: tuple[int, ...]
    weights: MeasureWeights
    kl: float
    residuals: np.ndarray
    converged: bool
    diagnosis: str = ""
    residual_history: tuple[float, ...] = ()
    include_expectation: bool = True


@dataclass(frozen=True)
class ReplicateOutcome:
    """One replicate's solved measure plus the outputs worth averaging."""

    premium: float
    sensitivities: np.ndarray
    residual_sup: float
    measure: TiltedMeasure | None = None
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolveReport:
    measure: TiltedMeasure | None
    accepted: int
    attempted: int
    premium: float
    sensitivities: np.ndarray
    log: tuple
    extras: dict = field(default_factory=dict)


class _ConstraintSystem:
    """Scaled constraint columns with bin-resolved residual and Jacobian.

    Columns are centred and standardised before exponentiation; the
    centring constant cancels in the bin normalisation and the scaling is
    undone when multipliers are reported. ``targets`` holds the constraint
    levels on the same centred scale: zero-mean for the loss-expectation
    column, minus the standardised sampling mean for score columns.
    """

    def __init__(
        self, columns: np.ndarray, targets: np.ndarray, u: np.ndarray, bins: BinScheme
    ):
        columns = np.asarray(columns, dtype=float)
        self.n, self.k = columns.shape
        scales = columns.std(axis=0)
        self.scales = np.where(scales > 0.0, scales, 1.0)
        means = columns.mean(axis=0)
        self.w = (columns - means) / self.scales
        self.targets = (np.asarray(targets, dtype=float) - means) / self.scales
        self.b = bins.assign(u)
        self.counts = np.bincount(self.b, minlength=bins.count).astype(float)
        if np.any(self.counts == 0):
            empty = int(np.flatnonzero(self.counts == 0)[0])
            raise BinningError(f"rank bin {empty} of {bins.count} received no samples")
        self.mass = self.counts / self.n

    def _raw(self, eta: np.ndarray) -> np.ndarray:
        args = -(self.w @ eta)
        worst = float(np.max(np.abs(args))) if args.size else 0.0
        if worst > MAX_EXPONENT:
            raise TiltOverflow(
                f"tilt exponent reached {worst:.1f}, beyond the safe range", params=eta
            )
        return np.exp(args)

    def _bin_sums(self, raw: np.ndarray) -> np.ndarray:
        sums = np.bincount(self.b, weights=raw, minlength=self.counts.shape[0])
        if np.any(sums <= 0.0):
            raise TiltOverflow("tilt weights underflowed throughout a rank bin")
        return sums

    def weights(self, eta: np.ndarray) -> np.ndarray:
        raw = self._raw(eta)
        sums = self._bin_sums(raw)
        return raw / (sums / self.counts)[self.b]

    def _weighted_means(self, raw: np.ndarray, sums: np.ndarray) -> np.ndarray:
        nb = self.counts.shape[0]
        means = np.empty((nb, self.k))
        for k in range(self.k):
            means[:, k] = np.bincount(self.b, weights=raw * self.w[:, k], minlength=nb) / sums
        return means

    def residual(self, eta: np.ndarray) -> np.ndarray:
        raw = self._raw(eta)
        sums = self._bin_sums(raw)
        return self.mass @ self._weighted_means(raw, sums) - self.targets

    def residual_and_jacobian(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raw = self._raw(eta)
        nb = self.counts.shape[0]
        sums = self._bin_sums(raw)
        means = self._weighted_means(raw, sums)
        cov = np.empty((self.k, self.k))
        for k in range(self.k):
            for l in range(k, self.k):
                second = (
                    np.bincount(self.b, weights=raw * self.w[:, k] * self.w[:, l], minlength=nb)
                    / sums
                )
                value = float(self.mass @ (second - means[:, k] * means[:, l]))
                cov[k, l] = value
                cov[l, k] = value
        return self.mass @ means - self.targets, cov


def _build_system(
    phi_matrix: PhiMatrix,
    samples: ConditionalSampleSet,
    bins: BinScheme,
    include_expectation: bool,
) -> _ConstraintSystem:
    y = np.asarray(samples.y, dtype=float)
    if include_expectation:
        columns = np.hstack([phi_matrix.values, y[:, None]])
        targets = np.concatenate([np.zeros(phi_matrix.m), [y.mean()]])
    else:
        columns = phi_matrix.values
        targets = np.zeros(phi_matrix.m)
    return _ConstraintSystem(columns, targets, samples.u, bins)


def _measure_from(
    system: _ConstraintSystem,
    eta_scaled: np.ndarray,
    indices: tuple[int, ...],
    bins: BinScheme,
    include_expectation: bool,
    converged: bool,
    diagnosis: str,
    history: list[float],
) -> TiltedMeasure:
    eta_unscaled = eta_scaled / system.scales
    if include_expectation:
        params = TiltParameters(eta=eta_unscaled[:-1], eta_expectation=float(eta_unscaled[-1]))
    else:
        params = TiltParameters(eta=eta_unscaled, eta_expectation=0.0)
    weights = MeasureWeights(r=system.weights(eta_scaled), bins=bins)
    return TiltedMeasure(
        params=params,
        indices=indices,
        weights=weights,
        kl=kl_divergence(weights),
        residuals=system.residual(eta_scaled),
        converged=converged,
        diagnosis=diagnosis,
        residual_history=tuple(history),
        include_expectation=include_expectation,
    )


def solve_insensitive(
    samples: ConditionalSampleSet,
    phi_matrix: PhiMatrix,
    bins: BinScheme,
    opts: SolverOptions = SolverOptions(),
    include_expectation: bool = True,
    eta0: np.ndarray | None = None,
) -> TiltedMeasure:
    """Newton solve for the measure zeroing every column of ``phi_matrix``.

    With ``include_expectation`` the loss expectation is preserved as an
    extra constraint. The returned measure reports scaled residuals, the
    KL divergence from the sampling measure and a strictly decreasing
    residual history; non-convergence is reported, not raised. ``eta0``
    overrides the zero start, given in reported (unscaled) units; the
    solution is independent of the start on converged instances.
    """
    system = _build_system(phi_matrix, samples, bins, include_expectation)
    if eta0 is None:
        eta = np.zeros(system.k)
    else:
        eta0 = np.asarray(eta0, dtype=float)
        if include_expectation and eta0.shape == (system.k - 1,):
            eta0 = np.concatenate([eta0, [0.0]])
        if eta0.shape != (system.k,):
            raise ValueError(f"eta0 must have {system.k} components")
        eta = eta0 * system.scales
    diagnosis = ""
    converged = False
    repaired = False
    history: list[float] = []

    resid, jac = system.residual_and_jacobian(eta)
    norm = float(np.max(np.abs(resid))) if resid.size else 0.0
    history.append(norm)
    for _ in range(opts.max_iter):
        if norm <= opts.tol:
            converged = True
            break
        try:
            step = np.linalg.solve(jac, resid)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError("non-finite step")
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, resid, rcond=None)[0]
        step_norm = float(np.max(np.abs(step))) if step.size else 0.0
        if step_norm > opts.max_step:
            step = step * (opts.max_step / step_norm)
        accepted = False
        scale = 1.0
        while scale >= opts.min_step:
            trial = eta + scale * step
            if np.max(np.abs(trial)) > opts.eta_bound:
                scale *= opts.damping
                continue
            try:
                trial_resid, trial_jac = system.residual_and_jacobian(trial)
            except TiltOverflow:
                scale *= opts.damping
                continue
            trial_norm = float(np.max(np.abs(trial_resid)))
            if trial_norm < norm * (1.0 - 1e-4 * scale):
                eta, resid, norm, jac = trial, trial_resid, trial_norm, trial_jac
                history.append(norm)
                accepted = True
                break
            scale *= opts.damping
        if accepted:
            continue
        if not repaired and np.linalg.matrix_rank(jac, tol=1e-12 * max(1.0, norm)) < system.k:
            # Rank-deficient covariance: secant-style diagonal repair, one
            # retry before declaring the system stalled.
            jac = jac + 1e-8 * np.eye(system.k)
            repaired = True
            continue
        if float(np.max(np.abs(eta))) >= opts.eta_bound * (1.0 - 1e-9):
            direction = int(np.argmax(np.abs(eta)))
            diagnosis = f"multiplier escaped its bound in direction {direction}"
        else:
            diagnosis = f"stalled at residual {norm:.3e} with no descent step"
        break
    else:
        diagnosis = f"no convergence within {opts.max_iter} iterations (residual {norm:.3e})"
    if converged:
        diagnosis = ""
    return _measure_from(
        system, eta, phi_matrix.indices, bins, include_expectation, converged, diagnosis, history
    )


def solve_insensitive_no_expectation(
    samples: ConditionalSampleSet,
    phi_matrix: PhiMatrix,
    bins: BinScheme,
    opts: SolverOptions = SolverOptions(),
    eta0: np.ndarray | None = None,
) -> TiltedMeasure:
    """Score constraints only, with the loss-expectation multiplier pinned at zero."""
    return solve_insensitive(
        samples, phi_matrix, bins, opts, include_expectation=False, eta0=eta0
    )


def solve_marginal(
    samples: ConditionalSampleSet,
    phi_matrix: PhiMatrix,
    i: int,
    bins: BinScheme,
    opts: SolverOptions = SolverOptions(),
) -> TiltedMeasure:
    """Single-multiplier solve zeroing the score of covariate ``i`` only.

    The residual is strictly decreasing in the multiplier, so a sign
    bracket plus Brent's method finds the unique root when one exists;
    failing to bracket within the multiplier box is divergence. The
    returned measure is indexed by ``(i,)`` alone and carries no
    expectation constraint.
    """
    sub = phi_matrix.select((i,))
    system = _build_system(sub, samples, bins, include_expectation=False)

    def g(eta_scalar: float) -> float:
        return float(system.residual(np.array([eta_scalar]))[0])

    history: list[float] = []
    converged = False
    diagnosis = ""
    root = 0.0
    try:
        g0 = g(0.0)
        history.append(abs(g0))
        if abs(g0) <= opts.tol:
            converged = True
        else:
            lo, hi, glo, ghi = (0.0, 1.0, g0, g(1.0)) if g0 > 0.0 else (-1.0, 0.0, g(-1.0), g0)
            while glo * ghi > 0.0:
                if g0 > 0.0:
                    hi *= 2.0
                    if hi > opts.eta_bound:
                        raise TiltOverflow("no sign change within the multiplier box")
                    ghi = g(hi)
                else:
                    lo *= 2.0
                    if lo < -opts.eta_bound:
                        raise TiltOverflow("no sign change within the multiplier box")
                    glo = g(lo)
            root = float(brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16))
            final = abs(g(root))
            history.append(final)
            converged = final <= opts.tol
            if not converged:
                diagnosis = f"root refinement stopped at residual {final:.3e}"
    except TiltOverflow as exc:
        diagnosis = f"divergence while bracketing: {exc}"

    return _measure_from(
        system,
        np.array([root]),
        sub.indices,
        bins,
        include_expectation=False,
        converged=converged,
        diagnosis=diagnosis,
        history=history,
    )


def solve_lambda(y: np.ndarray, base_r: np.ndarray, opts: SolverOptions = SolverOptions()) -> float:
    """Root of the expectation constraint for an exponentially corrected measure.

    Finds lambda with sum(r e^{-lambda y} (y - ybar)) / sum(r e^{-lambda y})
    at zero on the normalised scale, where ybar is the sampling mean of y
    and r the base measure weights. The left side is the derivative of a
    strictly convex cumulant, hence strictly decreasing; bracketing plus
    Brent's method applies. Raises TiltOverflow when no root exists inside
    the multiplier box.
    """
    y = np.asarray(y, dtype=float)
    r = np.asarray(base_r, dtype=float)
    ybar = float(y.mean())
    sd = float(y.std())
    if sd == 0.0:
        return 0.0
    z = (y - ybar) / sd
    logr = np.where(r > 0.0, np.log(np.where(r > 0.0, r, 1.0)), -np.inf)

    def g(lam_scaled: float) -> float:
        logw = logr - lam_scaled * z
        logw = logw - logw.max()
        w = np.exp(logw)
        return float(np.sum(w * z) / np.sum(w))

    g0 = g(0.0)
    if g0 == 0.0:
        return 0.0
    lo, hi = (0.0, 1.0) if g0 > 0.0 else (-1.0, 0.0)
    while g(lo) * g(hi) > 0.0:
        if g0 > 0.0:
            hi *= 2.0
            if hi > opts.eta_bound:
                raise TiltOverflow("expectation constraint unattainable for this base measure")
        else:
            lo *= 2.0
            if lo < -opts.eta_bound:
                raise TiltOverflow("expectation constraint unattainable for this base measure")
    root = float(brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16))
    return root / sd


def replicate(
    solve_fn,
    R: int,
    opts: SolverOptions = SolverOptions(),
    seeds: list[int] | None = None,
) -> SolveReport:
    """Run ``solve_fn`` over R seeds and average the accepted replicates.

    A replicate is accepted when its residual is at most ``opts.tol_accept``.
    Premium and sensitivities are averaged across accepted replicates;
    multipliers are not averaged, the first accepted measure is kept as the
    representative. All replicates rejected is an error carrying the log.
    """
    if seeds is None:
        seeds = list(range(R))
    if len(seeds) != R:
        raise ValueError("need exactly R seeds")
    outcomes: list[ReplicateOutcome] = []
    log = []
    for seed in seeds:
        outcome = solve_fn(seed)
        ok = outcome.residual_sup <= opts.tol_accept
        log.append((seed, outcome.residual_sup, ok))
        if ok:
            outcomes.append(outcome)
    if not outcomes:
        raise ReplicationError(
            f"all {R} replicates rejected at tol_accept={opts.tol_accept}", log=log
        )
    premium = float(np.mean([o.premium for o in outcomes]))
    sens = np.mean([o.sensitivities for o in outcomes], axis=0)
    shared = set.intersection(*(set(o.extras) for o in outcomes))
    extras = {key: float(np.mean([o.extras[key] for o in outcomes])) for key in sorted(shared)}
    return SolveReport(
        measure=outcomes[0].measure,
        accepted=len(outcomes),
        attempted=R,
        premium=premium,
        sensitivities=np.asarray(sens, dtype=float),
        log=tuple(log),
        extras=extras,
    )
