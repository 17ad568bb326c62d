"""Premium sensitivities to proportional stress of a protected covariate.

The sensitivity of the premium to the i-th protected covariate is the
expectation of the score

    phi_i(x, d, u) = d_i * dh/dd_i(x, d) * gamma(u),

taken under the pricing measure. For the linear loss model the partial is
the protected coefficient. The same quantity is the derivative of the
premium when D_i is stressed to (1 + eps) D_i comonotonically, which
``perturbed_samples`` realises with common random numbers so the claim can
be checked by central differences.

Categorical protected covariates have no interior to differentiate in; the
score formula is used directly. ``Mollifier`` provides the smoothed
counterpart (a kernel mix around the category values, driven by the same
uniform as the category draw) used to validate that choice: the score
computed with mollified covariate values converges to the discrete value
as the bandwidth shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .distortion import DistortionWeight, premium
from .laws import Categorical
from .scenario import (
    ConditionalSampleSet,
    LossModel,
    Scenario,
    assign_uniform_ranks,
    posterior_protected,
    sample_conditional,
)


@dataclass(frozen=True)
class PhiMatrix:
    """Score columns phi_i(x, d_j, u_j) for one conditional sample set."""

    values: np.ndarray
    indices: tuple[int, ...]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def select(self, indices: tuple[int, ...]) -> PhiMatrix:
        cols = [self.indices.index(i) for i in indices]
        return PhiMatrix(values=self.values[:, cols], indices=tuple(indices))


def phi(model: LossModel, x, d, u, i: int, w: DistortionWeight):
    """Score of protected covariate i at (x, d, u)."""
    d = np.asarray(d, dtype=float)
    return d[..., i] * model.partial_protected(i) * w.gamma(u)


def build_phi(
    model: LossModel,
    d: np.ndarray,
    u: np.ndarray,
    w: DistortionWeight,
    indices: tuple[int, ...] | None = None,
) -> PhiMatrix:
    d = np.asarray(d, dtype=float)
    if indices is None:
        indices = tuple(range(d.shape[1]))
    g = w.gamma(u)
    cols = [d[:, i] * model.partial_protected(i) * g for i in indices]
    values = np.column_stack(cols) if cols else np.empty((d.shape[0], 0))
    return PhiMatrix(values=values, indices=indices)


def sensitivity(phi_matrix: PhiMatrix, i: int, r: np.ndarray | None = None) -> float:
    """Measure expectation (1/n) sum r_j phi_i,j of one score column."""
    col = phi_matrix.values[:, phi_matrix.indices.index(i)]
    if r is None:
        return float(np.mean(col))
    return float(np.mean(np.asarray(r, dtype=float) * col))


def perturbed_samples(
    scenario: Scenario, samples: ConditionalSampleSet, i: int, eps: float
) -> ConditionalSampleSet:
    """The sample set under the stress D_i -> (1 + eps) D_i, same random numbers.

    Category draws and noise are replayed from the stored seed; losses are
    recomputed at the scaled covariate and ranks reassigned against the
    stressed conditional law (the posterior is unchanged, the loss levels
    scale), so the result prices exactly like an independent simulation of
    the stressed model would in the limit.
    """
    d = samples.d.copy()
    d[:, i] *= 1.0 + eps
    noise = samples.y - scenario.model.h(samples.x, samples.d)
    y = scenario.model.h(samples.x, d) + noise
    if samples.rank_mode == "analytic":
        combos, probs = posterior_protected(scenario, samples.x)
        scaled = combos.copy()
        scaled[:, i] *= 1.0 + eps
        scaled_levels = scenario.model.h(samples.x, scaled)
        z = y[:, None] - scaled_levels
        u = scenario.model.noise.cdf(z) @ probs
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
    else:
        u = assign_uniform_ranks(y, "empirical")
    return ConditionalSampleSet(
        x=samples.x, d=d, y=y, u=u, seed=samples.seed, rank_mode=samples.rank_mode
    )


def perturb_and_reprice(
    scenario: Scenario,
    x,
    i: int,
    eps: float,
    n: int,
    seed: int,
    w: DistortionWeight,
    r: np.ndarray | None = None,
) -> float:
    """Premium of the stressed loss (1 + eps) D_i at X = x."""
    samples = sample_conditional(scenario, x, n, seed)
    stressed = perturbed_samples(scenario, samples, i, eps)
    return premium(stressed.y, stressed.u, w, r)


@dataclass(frozen=True)
class Mollifier:
    """Gaussian kernel mix around the atoms of a categorical covariate."""

    atoms: tuple[float, ...]
    probs: tuple[float, ...]
    bandwidth: float

    def __post_init__(self):
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")
        if list(self.atoms) != sorted(self.atoms):
            raise ValueError("atoms must be sorted increasingly")
        p = np.asarray(self.probs)
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector")

    @classmethod
    def for_covariate(cls, law: Categorical, bandwidth: float) -> Mollifier:
        order = np.argsort(law.values)
        values = tuple(np.asarray(law.values, dtype=float)[order])
        probs = tuple(np.asarray(law.probs, dtype=float)[order])
        return cls(atoms=values, probs=probs, bandwidth=bandwidth)

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t, dtype=float)
        for atom, p in zip(self.atoms, self.probs):
            out = out + p * stats.norm.pdf(t, loc=atom, scale=self.bandwidth)
        return out

    def sample(self, n: int, seed) -> np.ndarray:
        """Comonotone draws: one uniform picks the atom and the kernel offset."""
        rng = np.random.default_rng(seed)
        v = rng.uniform(size=n)
        return self.transform(v)

    def transform(self, v: np.ndarray) -> np.ndarray:
        """Map uniforms to mollified values; monotone within each atom's band."""
        v = np.asarray(v, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(self.probs)))
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, v, side="right") - 1, 0, len(self.atoms) - 1)
        residual = (v - cum[idx]) / np.asarray(self.probs)[idx]
        residual = np.clip(residual, 1e-12, 1.0 - 1e-12)
        offsets = stats.norm.ppf(residual) * self.bandwidth
        return np.asarray(self.atoms)[idx] + offsets

    def offsets_for_categories(self, categories: np.ndarray, seed) -> np.ndarray:
        """Mollified values matching already-drawn categories (shared residual draw)."""
        rng = np.random.default_rng(seed)
        residual = rng.uniform(1e-12, 1.0 - 1e-12, size=np.asarray(categories).shape[0])
        return np.asarray(categories, dtype=float) + stats.norm.ppf(residual) * self.bandwidth


def snap_to_atom(atoms, t) -> np.ndarray:
    """Right-closed category assignment: t <= a_1 -> a_1, a_{k-1} < t <= a_k -> a_k."""
    atoms = np.asarray(atoms, dtype=float)
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(atoms, t, side="left")
    return atoms[np.clip(idx, 0, atoms.shape[0] - 1)]


def step_extension(model: LossModel, x, d, i: int, atoms, t) -> np.ndarray:
    """Loss at the category whose right-closed interval contains t."""
    d = np.atleast_2d(np.asarray(d, dtype=float)).copy()
    snapped = snap_to_atom(atoms, t)
    d[:, i] = snapped
    out = model.h(np.atleast_1d(x), d)
    return out if out.shape[0] > 1 else float(out[0])


def mollified_sensitivity(
    samples: ConditionalSampleSet,
    model: LossModel,
    mollifier: Mollifier,
    i: int,
    w: DistortionWeight,
    seed,
    r: np.ndarray | None = None,
) -> float:
    """Score expectation with the i-th covariate replaced by mollified values.

    The kernel draws share the sample's categories (comonotone residuals),
    so as the bandwidth shrinks this converges to ``sensitivity`` computed
    on the original discrete values.
    """
    smoothed = mollifier.offsets_for_categories(samples.d[:, i], seed)
    col = smoothed * model.partial_protected(i) * w.gamma(samples.u)
    if r is not None:
        col = np.asarray(r, dtype=float) * col
    return float(np.mean(col))
