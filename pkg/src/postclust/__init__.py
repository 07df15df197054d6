"""Selective inference for differences in cluster means.

Tests H0: the means of two estimated clusters are equal, accounting both for
the fact that the clusters were chosen by looking at the data and for
matrix-normal dependence across observations (U) and features (Sigma). The
p-value is a chi_p survival probability truncated to the exact set of
perturbations that reproduce the clustering; see README for the model and
usage.
"""
from .covmodels import (
    AR1,
    ARP,
    CompoundSymmetry,
    CovModel,
    Dense,
    Diagonal,
    Identity,
    MatrixNormalSpec,
    SpdMatrix,
    Toeplitz,
    inverse,
    kronecker,
    materialize,
    rng_for,
    sample,
    sample_with,
)
from .clustering import (
    ClusterAssignment,
    Dendrogram,
    KMeansTrace,
    LINKAGES,
    cut,
    hac_fit,
    kmeans_fit,
)
from .truncation import (
    IntervalUnion,
    QuadraticFn,
    hac_truncation_set,
    kmeans_truncation_set,
    lw_combine,
    pair_quadratic,
    quad_leq_zero,
    scale_set,
)
from .inference import (
    Contrast,
    HacSpec,
    KMeansSpec,
    PValueResult,
    SigmaEstimate,
    contrast,
    estimate_sigma,
    holm_adjust,
    maha_norm,
    p_value,
    p_value_mc,
    trunc_chi_cdf,
    trunc_chi_survival,
    v_matrix,
)
from .experiments import (
    EcdfSummary,
    ExperimentConfig,
    method_label,
    miscalibration_models,
    run_miscalibration,
    run_null_calibration,
    run_overestimation,
    run_pairwise_tests,
    run_power,
    setting_models,
    three_group_ids,
    three_group_mean,
    three_group_null_holds,
    two_group_mean,
    two_group_null_holds,
    two_group_sides,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AR1",
    "ARP",
    "ClusterAssignment",
    "CompoundSymmetry",
    "Contrast",
    "CovModel",
    "Dendrogram",
    "Dense",
    "Diagonal",
    "EcdfSummary",
    "ExperimentConfig",
    "HacSpec",
    "Identity",
    "IntervalUnion",
    "KMeansSpec",
    "KMeansTrace",
    "LINKAGES",
    "MatrixNormalSpec",
    "PValueResult",
    "QuadraticFn",
    "SigmaEstimate",
    "SpdMatrix",
    "Toeplitz",
    "contrast",
    "cut",
    "errors",
    "estimate_sigma",
    "hac_fit",
    "hac_truncation_set",
    "holm_adjust",
    "inverse",
    "kmeans_fit",
    "kmeans_truncation_set",
    "kronecker",
    "lw_combine",
    "maha_norm",
    "materialize",
    "method_label",
    "miscalibration_models",
    "p_value",
    "p_value_mc",
    "pair_quadratic",
    "quad_leq_zero",
    "rng_for",
    "run_miscalibration",
    "run_null_calibration",
    "run_overestimation",
    "run_pairwise_tests",
    "run_power",
    "sample",
    "sample_with",
    "scale_set",
    "setting_models",
    "three_group_ids",
    "three_group_mean",
    "three_group_null_holds",
    "trunc_chi_cdf",
    "trunc_chi_survival",
    "two_group_mean",
    "two_group_null_holds",
    "two_group_sides",
    "v_matrix",
]
