import numpy as np
import pytest
from scipy import stats

import fairtilt as ft
from fairtilt.scenario import conditional_cdf_y, conditional_loss_levels

# frozen by the quadrature oracle over the two lognormal densities
POSTERIOR_MINUS_AT_5 = 0.340184746289
# mixture cdf of Y | X=5 evaluated at h(5, +1)
CDF_AT_UPPER_LEVEL = 0.616120275838
# exact marginal of the three-level rating factor in the auto portfolio
X1_MARGINAL = {-1.0: 0.40, 0.0: 0.25, 1.0: 0.35}
TRUNC_EXP_MEAN_35_120 = 30.977550002881


def test_posterior_two_group_frozen_value(two_group):
    combos, probs = ft.posterior_protected(two_group, np.array([5.0]))
    assert combos[:, 0].tolist() == [-1.0, 1.0]
    assert probs[0] == pytest.approx(POSTERIOR_MINUS_AT_5, abs=1e-9)
    assert probs.sum() == pytest.approx(1.0)


def test_posterior_reduces_to_prior_under_independence():
    d = ft.CovariateSpec(
        name="d1",
        role="protected",
        laws={None: ft.Categorical((-1.0, 1.0), (0.3, 0.7))},
    )
    x = ft.CovariateSpec(
        name="x1", role="permitted", laws={None: ft.LogNormal(0.0, 1.0)}
    )
    model = ft.LossModel(
        intercept=0.0,
        permitted_coeffs=(1.0,),
        protected_coeffs=(1.0,),
        noise=ft.NormalNoise(1.0),
    )
    scenario = ft.Scenario(covariates=(d, x), model=model)
    for value in (0.5, 1.0, 4.0):
        _, probs = ft.posterior_protected(scenario, np.array([value]))
        assert probs == pytest.approx([0.3, 0.7], abs=1e-14)


def test_posterior_rejects_unsupported_point(two_group):
    with pytest.raises(ft.DomainError):
        ft.posterior_protected(two_group, np.array([-3.0]))


def test_conditional_cdf_frozen_value_and_limits(two_group):
    x = np.array([5.0])
    upper_level = two_group.model.h(x, np.array([[1.0]]))[0]
    assert conditional_cdf_y(two_group, x, upper_level) == pytest.approx(
        CDF_AT_UPPER_LEVEL, abs=1e-9
    )
    assert conditional_cdf_y(two_group, x, 1e9) == pytest.approx(1.0)
    assert conditional_cdf_y(two_group, x, -1e9) == pytest.approx(0.0)


def test_conditional_cdf_degenerate_group_is_noise_shift():
    d = ft.CovariateSpec(
        name="d1", role="protected", laws={None: ft.Categorical((1.0,), (1.0,))}
    )
    x = ft.CovariateSpec(name="x1", role="permitted", laws={None: ft.LogNormal(0.0, 1.0)})
    model = ft.LossModel(
        intercept=0.0,
        permitted_coeffs=(0.5,),
        protected_coeffs=(0.25,),
        noise=ft.NormalNoise(0.5),
    )
    scenario = ft.Scenario(covariates=(d, x), model=model)
    point = np.array([2.0])
    level = scenario.model.h(point, np.array([[1.0]]))[0]
    for y in (level - 0.3, level, level + 1.0):
        assert conditional_cdf_y(scenario, point, y) == pytest.approx(
            stats.norm.cdf((y - level) / 0.5)
        )


def test_conditional_cdf_monte_carlo_agreement(two_group):
    x = np.array([5.0])
    samples = ft.sample_conditional(two_group, x, 1_000_000, seed=99)
    upper_level = two_group.model.h(x, np.array([[1.0]]))[0]
    empirical = float(np.mean(samples.y <= upper_level))
    assert abs(empirical - CDF_AT_UPPER_LEVEL) <= 2e-3


def test_sample_conditional_mean_within_clt_band(two_group):
    x = np.array([5.0])
    samples = ft.sample_conditional(two_group, x, 100_000, seed=5)
    levels, probs = conditional_loss_levels(two_group, x)
    target = float(levels @ probs)
    band = 3.0 * samples.y.std() / np.sqrt(samples.n)
    assert abs(samples.y.mean() - target) <= band


def test_empirical_midranks_by_hand():
    u = ft.assign_uniform_ranks(np.array([3.0, 1.0, 2.0]))
    assert u == pytest.approx([5.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0])


def test_constant_vector_gets_positional_midranks():
    n = 5
    u = ft.assign_uniform_ranks(np.full(n, 7.0))
    assert u == pytest.approx((np.arange(n) + 0.5) / n)


def test_analytic_ranks_pass_uniformity(two_group):
    samples = ft.sample_conditional(two_group, np.array([5.0]), 100_000, seed=21)
    assert samples.rank_mode == "analytic"
    stat = stats.kstest(samples.u, "uniform")
    assert stat.pvalue >= 0.01


def test_degenerate_everything_falls_back_to_midranks():
    d = ft.CovariateSpec(
        name="d1", role="protected", laws={None: ft.Categorical((1.0,), (1.0,))}
    )
    x = ft.CovariateSpec(name="x1", role="permitted", laws={None: ft.LogNormal(0.0, 1.0)})
    model = ft.LossModel(
        intercept=0.0,
        permitted_coeffs=(1.0,),
        protected_coeffs=(1.0,),
        noise=ft.NormalNoise(0.0),
    )
    scenario = ft.Scenario(covariates=(d, x), model=model)
    samples = ft.sample_conditional(scenario, np.array([2.0]), 10, seed=0)
    assert samples.rank_mode == "empirical"
    assert np.unique(samples.y).size == 1
    assert samples.u == pytest.approx((np.arange(10) + 0.5) / 10)


def test_analytic_ranks_need_noise():
    with pytest.raises(ft.UnsupportedLawError):
        ft.assign_uniform_ranks(
            np.array([1.0, 2.0]),
            "analytic",
            scenario=ft.infeasible_two_point(),
            x=np.array([1.0]),
        )


def test_generate_dataset_conditional_frequency(auto):
    data = ft.generate_dataset(auto, 100_000, seed=13)
    d1 = data.d[:, 0]
    x1 = data.x[:, 0]
    mask = d1 == 1.0
    p_hat = float(np.mean(x1[mask] == 1.0))
    band = 3.0 * np.sqrt(0.25 / mask.sum())
    assert abs(p_hat - 0.5) <= band


def test_generate_dataset_single_row(two_group):
    data = ft.generate_dataset(two_group, 1, seed=0)
    assert data.n == 1
    assert data.d.shape == (1, 1)
    assert data.x.shape == (1, 1)
    assert np.isfinite(data.y).all()


def test_generate_dataset_truncated_mean(auto):
    data = ft.generate_dataset(auto, 200_000, seed=17)
    x2 = data.x[:, 1]
    mask = data.d[:, 1] == -1.0
    sample = x2[mask]
    band = 3.0 * sample.std() / np.sqrt(sample.size)
    assert abs(sample.mean() - TRUNC_EXP_MEAN_35_120) <= band


def test_marginal_law_collapses_categorical(auto):
    law = ft.marginal_law(auto, "x1")
    assert isinstance(law, ft.Categorical)
    for value, prob in X1_MARGINAL.items():
        assert law.weight(value) == pytest.approx(prob, abs=1e-12)


def test_marginal_law_mixture_moments(two_group):
    law = ft.marginal_law(two_group, "x1")
    direct = 0.4 * ft.LogNormal(2.0, 1.0 / 3.0).mean() + 0.6 * ft.LogNormal(1.5, 0.5).mean()
    assert law.mean() == pytest.approx(direct)
    q = law.ppf(0.5)
    assert law.cdf(q) == pytest.approx(0.5, abs=1e-10)


def test_scenario_validation_errors():
    d = ft.CovariateSpec(
        name="d1", role="protected", laws={None: ft.Categorical((-1.0, 1.0), (0.5, 0.5))}
    )
    x = ft.CovariateSpec(name="x1", role="permitted", laws={None: ft.LogNormal(0.0, 1.0)})
    with pytest.raises(ValueError):
        ft.Scenario(
            covariates=(d, x),
            model=ft.LossModel(
                intercept=0.0,
                permitted_coeffs=(1.0, 2.0),
                protected_coeffs=(1.0,),
                noise=ft.NormalNoise(1.0),
            ),
        )
    with pytest.raises(ValueError):
        ft.CovariateSpec(
            name="d1", role="protected", laws={1.0: ft.Categorical((1.0,), (1.0,))}
        )
    with pytest.raises(ValueError):
        ft.CovariateSpec(name="d1", role="owner", laws={None: ft.Categorical((1.0,), (1.0,))})
