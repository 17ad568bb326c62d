"""Distribution families used by scenario covariates and noise.

Four covariate families are supported: finite categorical laws, lognormal
laws, exponential laws truncated to [0, upper], and normal laws truncated
to [lower, upper]. Each exposes the same small surface (sample / cdf /
density / quantile / mean) so scenario code never branches on the family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Categorical:
    """Finite law on a list of real values with matching probabilities."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0.0):
            raise ValueError("categorical probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"categorical probabilities sum to {p.sum()!r}, not 1")
        if len(set(self.values)) != len(self.values):
            raise ValueError("categorical values must be distinct")

    @property
    def is_discrete(self) -> bool:
        return True

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.probs))
        return np.asarray(self.values, dtype=float)[idx]

    def weight(self, x: float) -> float:
        """Point mass at x (used as the likelihood factor in posteriors)."""
        for v, p in zip(self.values, self.probs):
            if x == v:
                return p
        return 0.0

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        order = np.argsort(v)
        return np.where(x[..., None] >= v[order], p[order], 0.0).sum(axis=-1)

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))


@dataclass(frozen=True)
class LogNormal:
    """exp(N(mu, sigma^2))."""

    mu: float
    sigma: float
    _dist: stats.rv_continuous = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("lognormal sigma must be positive")
        object.__setattr__(self, "_dist", stats.lognorm(s=self.sigma, scale=np.exp(self.mu)))

    @property
    def is_discrete(self) -> bool:
        return False

    def sample(self, rng, size):
        return np.exp(rng.normal(self.mu, self.sigma, size=size))

    def weight(self, x: float) -> float:
        return float(self._dist.pdf(x))

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def ppf(self, q):
        return self._dist.ppf(q)

    def mean(self) -> float:
        return float(self._dist.mean())


@dataclass(frozen=True)
class TruncExponential:
    """Exponential(rate) conditioned on [0, upper]."""

    rate: float
    upper: float
    _dist: stats.rv_continuous = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rate <= 0.0 or self.upper <= 0.0:
            raise ValueError("rate and upper must be positive")
        object.__setattr__(
            self, "_dist", stats.truncexpon(b=self.upper * self.rate, scale=1.0 / self.rate)
        )

    @property
    def is_discrete(self) -> bool:
        return False

    def sample(self, rng, size):
        return self._dist.ppf(rng.uniform(size=size))

    def weight(self, x: float) -> float:
        return float(self._dist.pdf(x))

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def ppf(self, q):
        return self._dist.ppf(q)

    def mean(self) -> float:
        return float(self._dist.mean())


@dataclass(frozen=True)
class TruncNormal:
    """N(loc, scale^2) conditioned on [lower, upper]."""

    loc: float
    scale: float
    lower: float
    upper: float
    _dist: stats.rv_continuous = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if not self.lower < self.upper:
            raise ValueError("lower must be strictly below upper")
        a = (self.lower - self.loc) / self.scale
        b = (self.upper - self.loc) / self.scale
        object.__setattr__(self, "_dist", stats.truncnorm(a, b, loc=self.loc, scale=self.scale))

    @property
    def is_discrete(self) -> bool:
        return False

    def sample(self, rng, size):
        return self._dist.ppf(rng.uniform(size=size))

    def weight(self, x: float) -> float:
        return float(self._dist.pdf(x))

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def ppf(self, q):
        return self._dist.ppf(q)

    def mean(self) -> float:
        return float(self._dist.mean())


Law = Categorical | LogNormal | TruncExponential | TruncNormal


@dataclass(frozen=True)
class NormalNoise:
    """Additive N(0, std^2) error on the loss; std = 0 gives a degenerate error."""

    std: float

    def __post_init__(self):
        if self.std < 0.0:
            raise ValueError("noise std must be non-negative")

    def sample(self, rng, size):
        if self.std == 0.0:
            return np.zeros(size)
        return rng.normal(0.0, self.std, size=size)

    def cdf(self, z):
        if self.std == 0.0:
            return np.where(np.asarray(z, dtype=float) >= 0.0, 1.0, 0.0)
        return stats.norm.cdf(np.asarray(z, dtype=float) / self.std)


_LAW_TAGS = {
    "categorical": Categorical,
    "lognormal": LogNormal,
    "trunc_exponential": TruncExponential,
    "trunc_normal": TruncNormal,
}


def law_to_dict(law: Law) -> dict:
    if isinstance(law, Categorical):
        return {"categorical": {"values": list(law.values), "probs": list(law.probs)}}
    if isinstance(law, LogNormal):
        return {"lognormal": {"mu": law.mu, "sigma": law.sigma}}
    if isinstance(law, TruncExponential):
        return {"trunc_exponential": {"rate": law.rate, "upper": law.upper}}
    if isinstance(law, TruncNormal):
        return {
            "trunc_normal": {
                "loc": law.loc,
                "scale": law.scale,
                "lower": law.lower,
                "upper": law.upper,
            }
        }
    raise TypeError(f"unknown law type {type(law)!r}")


def law_from_dict(spec: dict) -> Law:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError(f"law spec must be a single-key mapping, got {spec!r}")
    tag, params = next(iter(spec.items()))
    if tag not in _LAW_TAGS:
        raise ValueError(f"unknown law family {tag!r}")
    cls = _LAW_TAGS[tag]
    if tag == "categorical":
        return Categorical(tuple(params["values"]), tuple(params["probs"]))
    return cls(**params)
