"""Evaluation grids over permitted covariates and summary indices.

Premia and sensitivities are conditional quantities; turning them into a
single figure per protected attribute requires choosing where to look.
The grid here stratifies each discrete permitted covariate by its exact
marginal levels and places equal-mass quantile midpoints on each
continuous one, so node weights form a probability vector and weighted
sums approximate integrals against the permitted marginal law.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .distortion import DistortionWeight, premium
from .io import derive_rng
from .laws import Categorical
from .scenario import Scenario, assign_uniform_ranks, marginal_law, posterior_protected

__all__ = [
    "GridNode",
    "XGrid",
    "build_xgrid",
    "MarginalIndex",
    "aggregate_sensitivities",
    "SensitivityReport",
    "kl_curve",
    "node_rows",
    "summary_rows",
    "PremiumComparison",
    "comparison_premia",
]


@dataclass(frozen=True)
class GridNode:
    """One evaluation point with its share of the grid mass."""

    x: np.ndarray
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))


@dataclass(frozen=True)
class XGrid:
    names: tuple[str, ...]
    nodes: tuple[GridNode, ...]

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def weights(self) -> np.ndarray:
        return np.array([node.weight for node in self.nodes])

    @property
    def points(self) -> np.ndarray:
        return np.stack([node.x for node in self.nodes])


def build_xgrid(scenario: Scenario, quantiles: int = 25) -> XGrid:
    """Tensor grid over the permitted covariates.

    Discrete covariates contribute their exact marginal levels and
    probabilities; continuous ones contribute the ``quantiles`` midpoint
    quantiles (k - 1/2)/Q of their marginal mixture, each carrying mass
    1/Q. Node weights are the products of the per-coordinate masses.
    """
    if quantiles < 1:
        raise ValueError("quantiles must be a positive integer")
    axes = []
    for cov in scenario.permitted:
        law = marginal_law(scenario, cov.name)
        if isinstance(law, Categorical):
            axes.append(list(zip(law.values, law.probs)))
        else:
            probs = (np.arange(quantiles) + 0.5) / quantiles
            axes.append([(law.ppf(p), 1.0 / quantiles) for p in probs])
    nodes = []
    for combo in product(*axes):
        values = np.array([value for value, _ in combo])
        weight = float(np.prod([mass for _, mass in combo]))
        nodes.append(GridNode(x=values, weight=weight))
    return XGrid(names=tuple(cov.name for cov in scenario.permitted), nodes=tuple(nodes))


@dataclass(frozen=True)
class MarginalIndex:
    """Grid-aggregated absolute sensitivities per protected coordinate."""

    per_coordinate: np.ndarray
    coverage: float

    @property
    def total(self) -> float:
        return float(np.sum(self.per_coordinate))


def aggregate_sensitivities(
    weights: np.ndarray, sensitivities: np.ndarray, converged: np.ndarray | None = None
) -> MarginalIndex:
    """Weighted mean of |sensitivity| over the grid, per coordinate.

    Nodes flagged non-converged are excluded and the remaining weights
    renormalised; ``coverage`` records the retained weight fraction so a
    low value flags an index built on a thin slice of the grid.
    """
    weights = np.asarray(weights, dtype=float)
    sens = np.atleast_2d(np.asarray(sensitivities, dtype=float))
    if sens.shape[0] != weights.shape[0]:
        raise ValueError("one sensitivity row per grid node required")
    if converged is None:
        converged = np.ones(weights.shape[0], dtype=bool)
    converged = np.asarray(converged, dtype=bool)
    total = float(weights.sum())
    kept = float(weights[converged].sum())
    if kept <= 0.0:
        raise ValueError("no converged nodes to aggregate")
    scaled = weights[converged] / kept
    per_coordinate = scaled @ np.abs(sens[converged])
    return MarginalIndex(per_coordinate=per_coordinate, coverage=kept / total)


@dataclass(frozen=True)
class SensitivityReport:
    """Per-node premia, sensitivities and KL cost for one measure on one grid."""

    measure_label: str
    grid: XGrid
    premiums: np.ndarray
    sensitivities: np.ndarray
    kl: np.ndarray
    converged: np.ndarray
    accepted: np.ndarray
    attempted: np.ndarray

    def __post_init__(self):
        nodes = self.grid.size
        for name in ("premiums", "kl", "converged", "accepted", "attempted"):
            if np.asarray(getattr(self, name)).shape[0] != nodes:
                raise ValueError(f"{name} must have one entry per grid node")
        if np.atleast_2d(self.sensitivities).shape[0] != nodes:
            raise ValueError("sensitivities must have one row per grid node")

    def xi(self) -> MarginalIndex:
        return aggregate_sensitivities(self.grid.weights, self.sensitivities, self.converged)

    @property
    def xi_marginal(self) -> np.ndarray:
        return self.xi().per_coordinate

    @property
    def xi_total(self) -> float:
        return self.xi().total


def kl_curve(report: SensitivityReport) -> list[tuple[tuple[float, ...], float]]:
    """(x, kl) pairs over the report's grid, converged nodes only."""
    return [
        (tuple(node.x.tolist()), float(k))
        for node, k, ok in zip(report.grid.nodes, report.kl, report.converged)
        if ok
    ]


def node_rows(report: SensitivityReport) -> list[dict]:
    """One mapping per grid node, ready for CSV emission."""
    rows = []
    m = np.atleast_2d(report.sensitivities).shape[1]
    for idx, node in enumerate(report.grid.nodes):
        row: dict = {name: float(v) for name, v in zip(report.grid.names, node.x)}
        row["weight"] = float(node.weight)
        row["measure"] = report.measure_label
        row["premium"] = float(report.premiums[idx])
        for i in range(m):
            row[f"sens_{i + 1}"] = float(report.sensitivities[idx][i])
        row["kl"] = float(report.kl[idx])
        row["converged"] = int(report.converged[idx])
        row["accepted"] = int(report.accepted[idx])
        row["attempted"] = int(report.attempted[idx])
        rows.append(row)
    return rows


def summary_rows(reports: list[SensitivityReport]) -> list[dict]:
    """One ξ summary mapping per measure."""
    rows = []
    for report in reports:
        index = report.xi()
        row: dict = {"measure": report.measure_label}
        for i, value in enumerate(index.per_coordinate):
            row[f"xi_{i + 1}"] = float(value)
        row["xi_total"] = index.total
        row["coverage"] = float(index.coverage)
        rows.append(row)
    return rows


@dataclass(frozen=True)
class PremiumComparison:
    """The three premia compared at one covariate point.

    ``unaware`` prices the conditional loss with the protected attributes
    integrated out under their posterior at x. ``best_estimates[k]`` pins
    them at the k-th combination. ``discrimination_free`` is the
    ``mixing_weights``-weighted average of the best-estimates; the weights
    are the posterior by default, the population marginal of the protected
    attributes when built with ``unconditional=True``.
    """

    combos: np.ndarray
    best_estimates: np.ndarray
    unaware: float
    discrimination_free: float
    mixing_weights: np.ndarray
    unconditional: bool

    def best_estimate_for(self, d) -> float:
        d = np.atleast_1d(np.asarray(d, dtype=float))
        matches = np.flatnonzero(np.all(self.combos == d, axis=1))
        if matches.size == 0:
            raise ValueError(f"protected value {d.tolist()} outside the scenario support")
        return float(self.best_estimates[matches[0]])


def comparison_premia(
    scenario: Scenario,
    x: np.ndarray,
    w: DistortionWeight,
    n: int,
    seed: int,
    unconditional: bool = False,
) -> PremiumComparison:
    """Unaware, best-estimate and discrimination-free premia at X = x.

    All variants share one noise sample so differences reflect the
    treatment of the protected attributes, not Monte Carlo jitter. Ranks
    are analytic when the noise has a density and empirical midranks
    otherwise.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    combos, posterior = posterior_protected(scenario, x)
    if unconditional:
        mixing = np.array(
            [
                np.prod([cov.laws[None].weight(v) for cov, v in zip(scenario.protected, combo)])
                for combo in combos
            ]
        )
    else:
        mixing = posterior
    rng = derive_rng(seed, 0)
    noise = scenario.model.noise.sample(rng, n)
    levels = scenario.model.h(x, combos)
    sigma = scenario.model.noise.std

    best_estimates = np.empty(len(combos))
    for k, level in enumerate(levels):
        y = level + noise
        if sigma > 0.0:
            # with d pinned the conditional law is a pure location shift,
            # so the rank of y is the rank of its noise term
            u = np.clip(scenario.model.noise.cdf(noise), 1e-15, 1.0 - 1e-15)
        else:
            u = assign_uniform_ranks(y, "empirical")
        best_estimates[k] = premium(y, u, w)

    rng_mix = derive_rng(seed, 1)
    picks = rng_mix.choice(len(combos), size=n, p=posterior)
    y_mix = levels[picks] + noise
    if sigma > 0.0:
        u_mix = np.zeros(n)
        for level, weight in zip(levels, posterior):
            u_mix += weight * scenario.model.noise.cdf(y_mix - level)
        u_mix = np.clip(u_mix, 1e-15, 1.0 - 1e-15)
    else:
        u_mix = assign_uniform_ranks(y_mix, "empirical")
    unaware = premium(y_mix, u_mix, w)
    return PremiumComparison(
        combos=combos,
        best_estimates=best_estimates,
        unaware=float(unaware),
        discrimination_free=float(mixing @ best_estimates),
        mixing_weights=mixing,
        unconditional=unconditional,
    )
