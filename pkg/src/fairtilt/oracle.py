"""Direct KL projections on explicit finite spaces.

This module is the slow, assumption-free reference the closed-form tilt
machinery is checked against. A projection instance is an explicit state
space with reference probabilities p and a linear constraint system
A q = b on the probability vector q. The I-projection minimising
sum q log(q/p) is found by ascent on the concave dual, whose gradient is
the constraint violation A q(mu) - b and whose curvature is minus the
constraint covariance under q(mu); iterates q(mu) = p exp(-A'mu)/Z stay
strictly positive throughout, matching KL support preservation.

Feasibility is established first by a phase-one linear program. When the
constraint set is empty the error carries a separating functional z with
z'[A; 1] <= 0 on every state but z'[b; 1] > 0, certifying emptiness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .errors import Infeasible
from .tilt import BinScheme

KKT_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteSpace:
    """Explicit states with reference probabilities."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0 or p.size > 4096:
            raise ValueError("reference must be a vector of at most 4096 states")
        if np.any(p <= 0.0):
            raise ValueError("reference probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"reference probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "p", p)

    @property
    def size(self) -> int:
        return self.p.shape[0]


def _check_feasible(a: np.ndarray, b: np.ndarray, size: int) -> None:
    a_eq = np.vstack([a, np.ones((1, size))])
    b_eq = np.concatenate([b, [1.0]])
    probe = linprog(
        c=np.zeros(size), A_eq=a_eq, b_eq=b_eq, bounds=[(0.0, None)] * size, method="highs"
    )
    if probe.status == 0:
        return
    # Build a Farkas certificate: maximise z'b_eq subject to z'A_eq <= 0
    # with box-bounded z; a positive optimum separates b from the cone.
    rows = a_eq.shape[0]
    cert = linprog(
        c=-b_eq,
        A_ub=a_eq.T,
        b_ub=np.zeros(size),
        bounds=[(-1.0, 1.0)] * rows,
        method="highs",
    )
    certificate = cert.x if cert.status == 0 and cert.x is not None else None
    raise Infeasible(
        "constraint set is empty: no probability vector satisfies A q = b",
        certificate=certificate,
    )


def project_kl(
    space: DiscreteSpace,
    constraints: np.ndarray,
    targets: np.ndarray,
    tol: float = KKT_TOL,
    max_iter: int = 500,
) -> np.ndarray:
    """I-projection of the reference onto {q >= 0, sum q = 1, A q = b}.

    Newton-accelerated ascent on the dual with a backtracking line search;
    converged when the constraint violation is at most ``tol`` in sup norm.
    """
    a = np.atleast_2d(np.asarray(constraints, dtype=float))
    if a.size == 0:
        a = a.reshape(0, space.size)
    b = np.asarray(targets, dtype=float).reshape(a.shape[0])
    if a.shape[1] != space.size:
        raise ValueError("constraint matrix width must match the state count")
    _check_feasible(a, b, space.size)
    logp = np.log(space.p)
    mu = np.zeros(a.shape[0])

    def state(mu_vec):
        logq = logp - a.T @ mu_vec
        logz = logsumexp(logq)
        q = np.exp(logq - logz)
        dual = -logz - mu_vec @ b
        return q, dual

    q, dual = state(mu)
    for _ in range(max_iter):
        grad = a @ q - b
        gap = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gap <= tol:
            return q
        centred = a - (a @ q)[:, None]
        hess = (centred * q) @ centred.T
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = grad
        scale = 1.0
        improved = False
        while scale > 1e-16:
            trial_mu = mu + scale * step
            trial_q, trial_dual = state(trial_mu)
            if trial_dual > dual + 1e-12 * scale * float(grad @ step):
                mu, q, dual = trial_mu, trial_q, trial_dual
                improved = True
                break
            scale *= 0.5
        if not improved:
            # Near the optimum dual increments drop below float precision
            # while the KKT gap is still shrinking quadratically; accept a
            # full Newton step on gap decrease alone.
            trial_mu = mu + step
            trial_q, trial_dual = state(trial_mu)
            trial_gap = float(np.max(np.abs(a @ trial_q - b)))
            if trial_gap < gap:
                mu, q, dual = trial_mu, trial_q, trial_dual
                continue
            trial_mu = mu + grad / max(1.0, np.linalg.norm(grad))
            trial_q, trial_dual = state(trial_mu)
            if trial_dual <= dual:
                break
            mu, q, dual = trial_mu, trial_q, trial_dual
    grad = a @ q - b
    gap = float(np.max(np.abs(grad))) if grad.size else 0.0
    if gap > tol:
        raise RuntimeError(f"dual ascent stopped at KKT residual {gap:.3e}")
    return q


def kl_between(q: np.ndarray, p: np.ndarray) -> float:
    """sum q log(q/p) with the 0 log 0 convention."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((q > 0.0) & (p <= 0.0)):
        return float("inf")
    active = q > 0.0
    return float(np.sum(q[active] * (np.log(q[active]) - np.log(p[active]))))


def tilt_projection_gap(
    columns: np.ndarray,
    targets: np.ndarray,
    u: np.ndarray,
    bin_count: int,
    r: np.ndarray,
) -> float:
    """Sup-norm gap between solved tilt weights and the direct projection.

    The sample set is taken as an explicit space with uniform reference
    probabilities; the projection constraints are the solved measure's
    constraint columns plus one mass-preservation row per rank bin. The
    returned gap compares the projected probabilities, rescaled to weights,
    against ``r``; closed form and projection agree when the solve was
    exact.
    """
    columns = np.atleast_2d(np.asarray(columns, dtype=float))
    if columns.shape[0] != len(r):
        columns = columns.T
    n = len(r)
    space = DiscreteSpace(p=np.full(n, 1.0 / n))
    b = BinScheme(bin_count).assign(np.asarray(u, dtype=float))
    counts = np.bincount(b, minlength=bin_count).astype(float)
    bin_rows = np.zeros((bin_count, n))
    bin_rows[b, np.arange(n)] = 1.0
    a = np.vstack([bin_rows, columns.T])
    b_vec = np.concatenate([counts / n, np.asarray(targets, dtype=float)])
    q = project_kl(space, a, b_vec)
    return float(np.max(np.abs(q * n - np.asarray(r, dtype=float))))


def project_barycentre(
    space: DiscreteSpace,
    members: list[np.ndarray],
    pi: np.ndarray,
    constraints: np.ndarray | None = None,
    targets: np.ndarray | None = None,
    tol: float = KKT_TOL,
) -> np.ndarray:
    """Minimiser of the pi-weighted KL divergences to the members.

    Optionally subject to extra linear constraints A q = b. The objective
    sum_i pi_i KL(q, q_i) differs from KL(q, g) by a constant, where g is
    the normalised geometric mean of the members, so the same dual ascent
    machinery applies with g as the reference.
    """
    pi = np.asarray(pi, dtype=float)
    if len(members) != pi.shape[0]:
        raise ValueError("one weight per member required")
    logg = np.zeros(space.size)
    for q_i, weight in zip(members, pi):
        q_i = np.asarray(q_i, dtype=float)
        if weight == 0.0:
            continue
        with np.errstate(divide="ignore"):
            logg = logg + weight * np.log(q_i)
    logg = logg - logsumexp(logg)
    reference = DiscreteSpace(p=np.exp(logg)) if np.all(np.isfinite(logg)) else None
    if reference is None:
        raise ValueError("members must share full support for the barycentre oracle")
    if constraints is None:
        constraints = np.empty((0, space.size))
        targets = np.empty(0)
    return project_kl(reference, constraints, targets, tol=tol)
