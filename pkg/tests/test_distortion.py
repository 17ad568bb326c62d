import numpy as np
import pytest

import fairtilt as ft
from fairtilt.distortion import premium, reranked_premium, weighted_midranks

# closed form: int_0^1 u du + 2 int_{0.9}^1 u du
UNIFORM_ES_PREMIUM = 0.69


def test_mean_gamma_is_one(mean_kind):
    u = np.linspace(0.0, 1.0, 11)
    assert mean_kind.gamma(u) == pytest.approx(np.ones(11))
    assert mean_kind.total_mass == 1.0


def test_es_load_gamma_values(es):
    assert es.gamma(0.95) == pytest.approx(3.0)
    assert es.gamma(0.5) == pytest.approx(1.0)
    # the surcharge indicator is strict at the tail level
    assert es.gamma(0.9) == pytest.approx(1.0)
    assert es.total_mass == pytest.approx(1.2)


def test_gamma_rejects_ranks_outside_unit_interval(es):
    with pytest.raises(ValueError):
        es.gamma(np.array([0.5, 1.2]))


def test_distortion_validation():
    with pytest.raises(ValueError):
        ft.DistortionWeight.es_load(alpha=1.0, load=0.2)
    with pytest.raises(ValueError):
        ft.DistortionWeight.es_load(alpha=0.9, load=-0.1)
    with pytest.raises(ValueError):
        ft.DistortionWeight.step_table((0.5,), (1.0,))
    with pytest.raises(ValueError):
        ft.DistortionWeight.step_table((0.6, 0.4), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        ft.DistortionWeight(kind="quantile")


def test_step_table_levels_and_mass():
    w = ft.DistortionWeight.step_table((0.5, 0.9), (0.5, 1.0, 3.5))
    assert w.gamma(np.array([0.1, 0.5, 0.7, 0.95])) == pytest.approx([0.5, 0.5, 1.0, 3.5])
    assert w.total_mass == pytest.approx(0.5 * 0.5 + 0.4 * 1.0 + 0.1 * 3.5)


def test_constant_loss_prices_at_total_mass(es):
    n = 1000
    y = np.full(n, 5.0)
    u = (np.arange(n) + 0.5) / n
    assert premium(y, u, es) == pytest.approx(5.0 * es.total_mass)


def test_uniform_loss_closed_form(es):
    rng = np.random.default_rng(2024)
    y = rng.uniform(size=400_000)
    u = y  # uniform losses are their own analytic ranks
    band = 3.0 * 1.0 / np.sqrt(y.size)
    assert abs(premium(y, u, es) - UNIFORM_ES_PREMIUM) <= band


def test_unit_weights_change_nothing(es):
    rng = np.random.default_rng(8)
    y = rng.normal(size=500)
    u = ft.assign_uniform_ranks(y)
    assert premium(y, u, es, r=np.ones(500)) == premium(y, u, es)
    assert reranked_premium(y, np.ones(500), es) == pytest.approx(premium(y, u, es))


def test_two_point_reranked_premium(mean_kind):
    y = np.array([0.0, 10.0])
    r = np.array([0.5, 1.5])
    assert weighted_midranks(y, r) == pytest.approx([0.125, 0.625])
    assert reranked_premium(y, r, mean_kind) == pytest.approx(7.5)


def test_weighted_midranks_reduce_to_midranks():
    y = np.array([3.0, -1.0, 2.0, 2.0])
    assert weighted_midranks(y, np.ones(4)) == pytest.approx(ft.assign_uniform_ranks(y))


def test_premium_scales_linearly(es):
    rng = np.random.default_rng(4)
    y = rng.lognormal(size=300)
    u = ft.assign_uniform_ranks(y)
    assert premium(3.0 * y, u, es) == pytest.approx(3.0 * premium(y, u, es))
