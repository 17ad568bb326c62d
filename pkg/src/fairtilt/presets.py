"""Ready-made scenarios used by the demos, the CLI configs and the tests."""

from __future__ import annotations

from .laws import Categorical, LogNormal, NormalNoise, TruncExponential, TruncNormal
from .scenario import PERMITTED, PROTECTED, CovariateSpec, LossModel, Scenario


def two_group() -> Scenario:
    """One binary protected trait, one lognormal riskiness score.

    The minority group (-1) is riskier in level, the majority group (+1)
    has the heavier tail, and the trait shifts the loss directly as well,
    so unaware and best-estimate premia split cleanly.
    """
    d = CovariateSpec(
        name="d1",
        role=PROTECTED,
        laws={None: Categorical((-1.0, 1.0), (0.4, 0.6))},
    )
    x = CovariateSpec(
        name="x1",
        role=PERMITTED,
        parent="d1",
        laws={
            -1.0: LogNormal(2.0, 1.0 / 3.0),
            1.0: LogNormal(1.5, 0.5),
        },
    )
    model = LossModel(
        intercept=0.0,
        permitted_coeffs=(0.5,),
        protected_coeffs=(0.25,),
        noise=NormalNoise(0.5),
    )
    labels = {"d1": {-1.0: "female", 1.0: "male"}}
    return Scenario(covariates=(d, x), model=model, labels=labels)


def auto_portfolio() -> Scenario:
    """Two protected traits driving one categorical and one continuous rating factor.

    d1 is binary, d2 ternary; x1 is a three-level factor informative about
    d1, x2 a positive continuous factor whose truncated conditional laws
    separate the d2 groups. Both traits also enter the loss directly.
    """
    d1 = CovariateSpec(
        name="d1",
        role=PROTECTED,
        laws={None: Categorical((-1.0, 1.0), (0.6, 0.4))},
    )
    d2 = CovariateSpec(
        name="d2",
        role=PROTECTED,
        laws={None: Categorical((-1.0, 0.0, 1.0), (3.0 / 8.0, 1.0 / 8.0, 0.5))},
    )
    x1 = CovariateSpec(
        name="x1",
        role=PERMITTED,
        parent="d1",
        laws={
            -1.0: Categorical((-1.0, 0.0, 1.0), (0.5, 0.25, 0.25)),
            1.0: Categorical((-1.0, 0.0, 1.0), (0.25, 0.25, 0.5)),
        },
    )
    x2 = CovariateSpec(
        name="x2",
        role=PERMITTED,
        parent="d2",
        laws={
            -1.0: TruncExponential(rate=1.0 / 35.0, upper=120.0),
            0.0: TruncExponential(rate=1.0 / 50.0, upper=90.0),
            1.0: TruncNormal(loc=50.0, scale=15.0, lower=1.5, upper=100.0),
        },
    )
    model = LossModel(
        intercept=15.0,
        permitted_coeffs=(3.0, 0.25),
        protected_coeffs=(5.0, 3.0),
        noise=NormalNoise(1.0),
    )
    return Scenario(covariates=(d1, d2, x1, x2), model=model)


def infeasible_two_point() -> Scenario:
    """Zero-noise scenario whose insensitive constraints contradict each other.

    With degenerate noise the conditional loss takes two values, so killing
    the protected sensitivity forces equal weights on both while preserving
    the loss expectation forces the original unbalanced split. No measure
    does both; expectation-constrained solves must report divergence.
    """
    d = CovariateSpec(
        name="d1",
        role=PROTECTED,
        laws={None: Categorical((-1.0, 1.0), (0.3, 0.7))},
    )
    x = CovariateSpec(
        name="x1",
        role=PERMITTED,
        laws={None: LogNormal(0.0, 0.5)},
    )
    model = LossModel(
        intercept=0.0,
        permitted_coeffs=(0.5,),
        protected_coeffs=(0.25,),
        noise=NormalNoise(0.0),
    )
    return Scenario(covariates=(d, x), model=model)
