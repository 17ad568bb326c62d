import numpy as np
import pytest

import fairtilt as ft


@pytest.fixture(scope="session")
def two_group():
    return ft.two_group()


@pytest.fixture(scope="session")
def auto():
    return ft.auto_portfolio()


@pytest.fixture(scope="session")
def infeasible():
    return ft.infeasible_two_point()


@pytest.fixture(scope="session")
def es():
    return ft.DistortionWeight.es_load(0.9, 0.2)


@pytest.fixture(scope="session")
def mean_kind():
    return ft.DistortionWeight.mean()


def make_samples(d, y, u, x=(0.0,), seed=0, rank_mode="empirical"):
    """Hand-built conditional sample set for solver and tilt unit tests."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    if d.shape[0] == 1 and np.asarray(y).shape[0] > 1:
        d = d.T
    return ft.ConditionalSampleSet(
        x=np.asarray(x, dtype=float),
        d=d,
        y=np.asarray(y, dtype=float),
        u=np.asarray(u, dtype=float),
        seed=seed,
        rank_mode=rank_mode,
    )


def spread_u(n, rng=None):
    """Midrank-style uniforms in sample order, optionally shuffled."""
    u = (np.arange(n) + 0.5) / n
    if rng is not None:
        rng.shuffle(u)
    return u
