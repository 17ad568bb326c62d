"""Distortion premia under minimally tilted pricing measures.

The package prices losses with rank-dependent distortion weights,
measures how those prices react to proportional stresses of protected
covariates, and constructs exponentially tilted pricing measures under
which the reactions vanish: jointly, one at a time, or blended through
a Kullback-Leibler barycentre.
"""

from .barycentre import (
    BarycentreResult,
    BarycentreWeights,
    WeightSearchResult,
    constrained_barycentre,
    jensen_constant,
    optimal_weights,
    proportional_reduction_gap,
    pure_barycentre,
)
from .distortion import (
    DistortionWeight,
    premium,
    reranked_premium,
    weighted_midranks,
)
from .errors import (
    BinningError,
    DatasetFormatError,
    DomainError,
    Infeasible,
    ReplicationError,
    TiltOverflow,
    UnsupportedLawError,
)
from .io import (
    derive_rng,
    derive_seed,
    load_dataset,
    load_scenario,
    save_dataset,
    save_scenario,
    scenario_hash,
    spawn_seed,
    write_manifest,
)
from .laws import Categorical, LogNormal, NormalNoise, TruncExponential, TruncNormal
from .metrics import (
    GridNode,
    MarginalIndex,
    PremiumComparison,
    SensitivityReport,
    XGrid,
    aggregate_sensitivities,
    build_xgrid,
    comparison_premia,
    kl_curve,
    node_rows,
    summary_rows,
)
from .oracle import (
    DiscreteSpace,
    kl_between,
    project_barycentre,
    project_kl,
    tilt_projection_gap,
)
from .pipeline import (
    GridRun,
    MeasureRequest,
    NodeMeasureResult,
    WeightSearchData,
    default_bundle,
    evaluate_bundle,
    oracle_check_node,
    parse_measure,
    prepare_weight_search,
    run_grid,
)
from .presets import auto_portfolio, infeasible_two_point, two_group
from .scenario import (
    ConditionalSampleSet,
    CovariateSpec,
    Dataset,
    LossModel,
    Scenario,
    assign_uniform_ranks,
    generate_dataset,
    marginal_law,
    posterior_protected,
    sample_conditional,
)
from .sensitivity import (
    Mollifier,
    PhiMatrix,
    build_phi,
    mollified_sensitivity,
    perturb_and_reprice,
    perturbed_samples,
    phi,
    sensitivity,
)
from .solver import (
    SolveReport,
    SolverOptions,
    replicate,
    solve_insensitive,
    solve_insensitive_no_expectation,
    solve_lambda,
    solve_marginal,
)
from .tilt import (
    BinScheme,
    MeasureWeights,
    TiltParameters,
    compute_weights,
    compute_weights_global,
    kl_divergence,
)

__version__ = "0.1.0"

__all__ = [
    "BarycentreResult",
    "BarycentreWeights",
    "BinScheme",
    "BinningError",
    "Categorical",
    "ConditionalSampleSet",
    "CovariateSpec",
    "Dataset",
    "DatasetFormatError",
    "DiscreteSpace",
    "DistortionWeight",
    "DomainError",
    "GridNode",
    "GridRun",
    "Infeasible",
    "LogNormal",
    "LossModel",
    "MarginalIndex",
    "MeasureRequest",
    "MeasureWeights",
    "Mollifier",
    "NodeMeasureResult",
    "NormalNoise",
    "PhiMatrix",
    "PremiumComparison",
    "ReplicationError",
    "Scenario",
    "SensitivityReport",
    "SolveReport",
    "SolverOptions",
    "TiltOverflow",
    "TiltParameters",
    "TruncExponential",
    "TruncNormal",
    "UnsupportedLawError",
    "WeightSearchData",
    "WeightSearchResult",
    "XGrid",
    "aggregate_sensitivities",
    "assign_uniform_ranks",
    "auto_portfolio",
    "build_phi",
    "build_xgrid",
    "comparison_premia",
    "compute_weights",
    "compute_weights_global",
    "constrained_barycentre",
    "default_bundle",
    "derive_rng",
    "derive_seed",
    "evaluate_bundle",
    "generate_dataset",
    "infeasible_two_point",
    "kl_between",
    "kl_curve",
    "jensen_constant",
    "kl_divergence",
    "load_dataset",
    "load_scenario",
    "marginal_law",
    "mollified_sensitivity",
    "node_rows",
    "optimal_weights",
    "oracle_check_node",
    "parse_measure",
    "perturb_and_reprice",
    "perturbed_samples",
    "phi",
    "posterior_protected",
    "premium",
    "prepare_weight_search",
    "project_barycentre",
    "project_kl",
    "proportional_reduction_gap",
    "pure_barycentre",
    "replicate",
    "reranked_premium",
    "run_grid",
    "sample_conditional",
    "save_dataset",
    "save_scenario",
    "scenario_hash",
    "sensitivity",
    "solve_insensitive",
    "solve_insensitive_no_expectation",
    "solve_lambda",
    "solve_marginal",
    "spawn_seed",
    "summary_rows",
    "tilt_projection_gap",
    "two_group",
    "weighted_midranks",
    "write_manifest",
]
