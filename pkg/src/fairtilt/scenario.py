"""Scenario definition: covariates, loss model, conditional laws and sampling.

A scenario consists of protected covariates D (categorical roots), permitted
covariates X (each optionally conditioned on one protected parent), a loss
model y = h(x, d) + noise, and category labels. Everything downstream
(premia, sensitivities, tilted measures) conditions on a permitted value x,
so the work horses here are the posterior of D given X = x, the conditional
loss cdf, and seeded conditional sampling with uniform rank assignment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedLawError
from .laws import Categorical, Law, NormalNoise

PROTECTED = "protected"
PERMITTED = "permitted"


@dataclass(frozen=True)
class CovariateSpec:
    """One covariate: a name, a role, and a law (possibly per parent value).

    Protected covariates must be categorical and parentless. A permitted
    covariate may name one protected parent, in which case ``laws`` maps
    each parent value to the conditional law; otherwise ``laws`` holds the
    single key ``None``.
    """

    name: str
    role: str
    laws: dict[float | None, Law]
    parent: str | None = None

    def __post_init__(self):
        if self.role not in (PROTECTED, PERMITTED):
            raise ValueError(f"role must be protected or permitted, got {self.role!r}")
        if self.parent is None and set(self.laws) != {None}:
            raise ValueError(f"covariate {self.name}: no parent, so laws must have key None")
        if self.parent is not None and None in self.laws:
            raise ValueError(f"covariate {self.name}: parent set, laws must key on parent values")

    def law_for(self, parent_value: float | None) -> Law:
        try:
            return self.laws[parent_value]
        except KeyError:
            raise DomainError(
                f"covariate {self.name}: no conditional law for parent value {parent_value!r}"
            ) from None


@dataclass(frozen=True)
class LossModel:
    """Linear loss aggregation y = intercept + bx.x + bd.d + noise."""

    intercept: float
    permitted_coeffs: tuple[float, ...]
    protected_coeffs: tuple[float, ...]
    noise: NormalNoise

    def __post_init__(self):
        coeffs = (*self.permitted_coeffs, *self.protected_coeffs)
        if not any(c != 0.0 for c in coeffs):
            raise ValueError("loss model needs at least one nonzero coefficient")

    def h(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Aggregate losses for permitted values x (n_x,) and rows of d (..., m)."""
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        bx = np.asarray(self.permitted_coeffs)
        bd = np.asarray(self.protected_coeffs)
        return self.intercept + float(x @ bx) + d @ bd

    def h_rows(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Row-wise aggregation for paired draws: x is (n, n_x), d is (n, m)."""
        bx = np.asarray(self.permitted_coeffs)
        bd = np.asarray(self.protected_coeffs)
        return self.intercept + np.asarray(x, dtype=float) @ bx + np.asarray(d, dtype=float) @ bd

    def partial_protected(self, i: int) -> float:
        """d h / d d_i; constant because the aggregation is linear."""
        return float(self.protected_coeffs[i])


@dataclass(frozen=True)
class Scenario:
    covariates: tuple[CovariateSpec, ...]
    model: LossModel
    labels: dict[str, dict[float, str]] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")
        by_name = {c.name: c for c in self.covariates}
        for c in self.covariates:
            if c.role == PROTECTED:
                if c.parent is not None:
                    raise ValueError(f"protected covariate {c.name} cannot have a parent")
                if not all(isinstance(law, Categorical) for law in c.laws.values()):
                    raise ValueError(f"protected covariate {c.name} must be categorical")
            elif c.parent is not None:
                parent = by_name.get(c.parent)
                if parent is None:
                    raise ValueError(f"covariate {c.name}: unknown parent {c.parent!r}")
                if parent.role != PROTECTED:
                    raise ValueError(f"covariate {c.name}: parent must be protected")
                parent_values = parent.laws[None].values
                missing = set(parent_values) - set(c.laws)
                if missing:
                    raise ValueError(
                        f"covariate {c.name}: missing conditional law for parent values {sorted(missing)}"
                    )
        if len(self.model.protected_coeffs) != len(self.protected):
            raise ValueError("protected coefficient count does not match covariates")
        if len(self.model.permitted_coeffs) != len(self.permitted):
            raise ValueError("permitted coefficient count does not match covariates")

    @property
    def protected(self) -> tuple[CovariateSpec, ...]:
        return tuple(c for c in self.covariates if c.role == PROTECTED)

    @property
    def permitted(self) -> tuple[CovariateSpec, ...]:
        return tuple(c for c in self.covariates if c.role == PERMITTED)

    def protected_combinations(self) -> np.ndarray:
        """All joint values of the protected vector, one row per combination."""
        grids = [c.laws[None].values for c in self.protected]
        return np.array(list(itertools.product(*grids)), dtype=float)


@dataclass(frozen=True)
class ConditionalSampleSet:
    """Monte Carlo draws of (D, Y) given X = x, with uniform ranks attached."""

    x: np.ndarray
    d: np.ndarray
    y: np.ndarray
    u: np.ndarray
    seed: int
    rank_mode: str

    @property
    def n(self) -> int:
        return self.y.shape[0]


def posterior_protected(scenario: Scenario, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior of the protected vector given permitted values x.

    Returns (combos, probs) where combos has one row per joint protected
    value. Weights are prior products times conditional likelihood factors
    of each permitted covariate at its observed value; a permitted covariate
    without a protected parent contributes a constant and is skipped.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    protected = scenario.protected
    permitted = scenario.permitted
    if x.shape[0] != len(permitted):
        raise ValueError(f"x has {x.shape[0]} components, scenario has {len(permitted)}")
    index = {c.name: k for k, c in enumerate(protected)}
    combos = scenario.protected_combinations()
    weights = np.zeros(combos.shape[0])
    for row, combo in enumerate(combos):
        w = 1.0
        for c, value in zip(protected, combo):
            w *= c.laws[None].weight(value)
        for j, c in enumerate(permitted):
            if c.parent is None:
                continue
            parent_value = combo[index[c.parent]]
            w *= c.law_for(parent_value).weight(x[j])
        weights[row] = w
    total = weights.sum()
    if not total > 0.0:
        raise DomainError(f"x = {x.tolist()} has zero likelihood under every protected value")
    return combos, weights / total


def conditional_loss_levels(scenario: Scenario, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Loss levels h(x, combo) and posterior probabilities, one per combination."""
    combos, probs = posterior_protected(scenario, x)
    levels = scenario.model.h(np.atleast_1d(x), combos)
    return levels, probs


def conditional_cdf_y(scenario: Scenario, x: np.ndarray, y) -> np.ndarray:
    """F_{Y|x}(y): a mixture of noise cdfs centred at the posterior loss levels."""
    levels, probs = conditional_loss_levels(scenario, x)
    y = np.asarray(y, dtype=float)
    z = y[..., None] - levels
    return scenario.model.noise.cdf(z) @ probs


def assign_uniform_ranks(
    y: np.ndarray,
    mode: str = "empirical",
    scenario: Scenario | None = None,
    x: np.ndarray | None = None,
) -> np.ndarray:
    """Uniform ranks of loss draws.

    Empirical mode returns midranks (rank - 1/2)/n with ties broken by a
    stable sort on (value, position), so a constant vector gets the ranks
    of its positions. Analytic mode evaluates the conditional loss cdf and
    needs the scenario and x.
    """
    y = np.asarray(y, dtype=float)
    if mode == "empirical":
        order = np.argsort(y, kind="stable")
        ranks = np.empty(y.shape[0], dtype=float)
        ranks[order] = np.arange(y.shape[0], dtype=float)
        return (ranks + 0.5) / y.shape[0]
    if mode == "analytic":
        if scenario is None or x is None:
            raise ValueError("analytic ranks need scenario and x")
        if scenario.model.noise.std == 0.0:
            raise UnsupportedLawError("analytic ranks need non-degenerate noise")
        u = conditional_cdf_y(scenario, x, y)
        eps = 1e-15
        return np.clip(u, eps, 1.0 - eps)
    raise ValueError(f"unknown rank mode {mode!r}")


def sample_conditional(
    scenario: Scenario,
    x: np.ndarray,
    n: int,
    seed: int,
    rank_mode: str = "auto",
) -> ConditionalSampleSet:
    """Draw n samples of (D, Y) given X = x and attach uniform ranks.

    ``auto`` uses analytic ranks whenever the noise is non-degenerate and
    falls back to empirical midranks otherwise (for example a zero-noise
    model, where all conditional randomness sits in D).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    combos, probs = posterior_protected(scenario, x)
    rng = np.random.default_rng(seed)
    idx = rng.choice(combos.shape[0], size=n, p=probs)
    d = combos[idx]
    noise = scenario.model.noise.sample(rng, n)
    y = scenario.model.h(x, d) + noise
    if rank_mode == "auto":
        rank_mode = "analytic" if scenario.model.noise.std > 0.0 else "empirical"
    if rank_mode == "analytic":
        u = assign_uniform_ranks(y, "analytic", scenario, x)
    else:
        u = assign_uniform_ranks(y, "empirical")
    return ConditionalSampleSet(x=x, d=d, y=y, u=u, seed=seed, rank_mode=rank_mode)


def noise_of(scenario: Scenario, samples: ConditionalSampleSet) -> np.ndarray:
    """The error terms of a sample set, recovered by subtracting the aggregation."""
    return samples.y - scenario.model.h(samples.x, samples.d)


@dataclass(frozen=True)
class Dataset:
    """Joint draws of (D, X, Y) as parallel arrays."""

    d: np.ndarray
    x: np.ndarray
    y: np.ndarray
    protected_names: tuple[str, ...]
    permitted_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.y.shape[0]


def generate_dataset(scenario: Scenario, n: int, seed: int) -> Dataset:
    """Sample the joint law: protected roots first, then conditional children."""
    rng = np.random.default_rng(seed)
    protected = scenario.protected
    permitted = scenario.permitted
    index = {c.name: k for k, c in enumerate(protected)}
    d = np.column_stack([c.laws[None].sample(rng, n) for c in protected]) if protected else np.empty((n, 0))
    x = np.empty((n, len(permitted)))
    for j, c in enumerate(permitted):
        if c.parent is None:
            x[:, j] = c.laws[None].sample(rng, n)
        else:
            parent_col = d[:, index[c.parent]]
            col = np.empty(n)
            for value, law in c.laws.items():
                mask = parent_col == value
                if mask.any():
                    col[mask] = law.sample(rng, int(mask.sum()))
            x[:, j] = col
    noise = scenario.model.noise.sample(rng, n)
    y = scenario.model.h_rows(x, d) + noise
    return Dataset(
        d=d,
        x=x,
        y=y,
        protected_names=tuple(c.name for c in protected),
        permitted_names=tuple(c.name for c in permitted),
    )


def marginal_law(scenario: Scenario, name: str):
    """Exact marginal of a permitted covariate as a mixture over its parent.

    Categorical children collapse to a single Categorical law; continuous
    children return a MixtureLaw with exact component weights. Grid builders
    must use this rather than hand-copied marginals.
    """
    spec = next((c for c in scenario.permitted if c.name == name), None)
    if spec is None:
        raise ValueError(f"unknown permitted covariate {name!r}")
    if spec.parent is None:
        return spec.laws[None]
    parent = next(c for c in scenario.protected if c.name == spec.parent)
    parent_law = parent.laws[None]
    weights = dict(zip(parent_law.values, parent_law.probs))
    components = [(weights[v], spec.laws[v]) for v in parent_law.values]
    if all(law.is_discrete for _, law in components):
        mass: dict[float, float] = {}
        for w, law in components:
            for v, p in zip(law.values, law.probs):
                mass[v] = mass.get(v, 0.0) + w * p
        values = tuple(sorted(mass))
        return Categorical(values, tuple(mass[v] for v in values))
    return MixtureLaw(tuple(w for w, _ in components), tuple(law for _, law in components))


@dataclass(frozen=True)
class MixtureLaw:
    """Finite mixture of continuous laws; quantiles solved by bracketed root finding."""

    weights: tuple[float, ...]
    components: tuple[Law, ...]

    @property
    def is_discrete(self) -> bool:
        return False

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, law in zip(self.weights, self.components):
            out = out + w * law.cdf(x)
        return out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, law in zip(self.weights, self.components):
            out = out + w * law.pdf(x)
        return out

    def support(self) -> tuple[float, float]:
        los, his = [], []
        for law in self.components:
            los.append(law.ppf(1e-12))
            his.append(law.ppf(1.0 - 1e-12))
        return float(min(los)), float(max(his))

    def ppf(self, q: float) -> float:
        from scipy.optimize import brentq

        lo, hi = self.support()
        lo, hi = lo - 1.0, hi + 1.0
        return float(brentq(lambda t: self.cdf(t) - q, lo, hi, xtol=1e-12))

    def mean(self) -> float:
        return float(sum(w * law.mean() for w, law in zip(self.weights, self.components)))
