"""Minimum-distance counterfactual explanations for clustering models.

Given a fitted clustering (k-means centers or Gaussian components), a
factual point, a target cluster, a per-feature actionability mask and a
plausibility factor, the solvers return the closest point assigned to the
target cluster: a closed-form hyperplane projection for k-means and a
single-scalar root-find for Gaussian cluster pairs.
"""

from .core import (
    DIAGONAL,
    FULL,
    GAUSSIAN,
    KMEANS,
    SPHERICAL,
    STATUS_DEGENERATE_IDENTITY,
    STATUS_NO_FEASIBLE_SOLUTION,
    STATUS_NO_ROOT_FOUND,
    STATUS_OK,
    CfRequest,
    CfResult,
    ClusterCfError,
    ClusterModel,
    CovarianceSpec,
    DimensionMismatchError,
    GaussianComponent,
    Mask,
    Standardization,
    ValidationError,
    assign_cluster,
    distance_sq,
    log_density,
    preference,
    score_matrix,
)
from .evaluate import (
    EvalConfig,
    EvalReport,
    attach_baselines,
    compute_aggregates,
    export_baseline_csv,
    ingest_baseline,
    read_report_json,
    run_eval,
    sweep_epsilon,
    write_records_csv,
    write_report_json,
)
from .explain import (
    AllTargetsFailedError,
    SourceMismatchWarning,
    explain,
    explain_best,
    plausibility_check,
)
from .fit import (
    Dataset,
    FitConfig,
    FitError,
    fit,
    fit_gmm,
    fit_kmeans,
    priors_policy,
)
from .gaussian_cf import (
    INDETERMINATE,
    UNIQUE,
    GaussianPairProblem,
    LambdaRoot,
    PoleError,
    build_pair_problem,
    constraint_residual,
    solve_gaussian_cf,
    uniqueness_class,
    z_of_lambda,
)
from .kmeans_cf import KmeansConstraint, build_constraint, solve_kmeans_cf
from .model_io import (
    DataError,
    load_dataset,
    load_model,
    load_model_with_provenance,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "AllTargetsFailedError",
    "CfRequest",
    "CfResult",
    "ClusterCfError",
    "ClusterModel",
    "CovarianceSpec",
    "DataError",
    "Dataset",
    "DimensionMismatchError",
    "EvalConfig",
    "EvalReport",
    "FitConfig",
    "FitError",
    "GaussianComponent",
    "GaussianPairProblem",
    "KmeansConstraint",
    "LambdaRoot",
    "Mask",
    "PoleError",
    "SourceMismatchWarning",
    "Standardization",
    "ValidationError",
    "assign_cluster",
    "attach_baselines",
    "build_constraint",
    "build_pair_problem",
    "compute_aggregates",
    "constraint_residual",
    "distance_sq",
    "explain",
    "explain_best",
    "export_baseline_csv",
    "fit",
    "fit_gmm",
    "fit_kmeans",
    "ingest_baseline",
    "load_dataset",
    "load_model",
    "load_model_with_provenance",
    "log_density",
    "plausibility_check",
    "preference",
    "priors_policy",
    "read_report_json",
    "run_eval",
    "save_model",
    "score_matrix",
    "solve_gaussian_cf",
    "solve_kmeans_cf",
    "sweep_epsilon",
    "uniqueness_class",
    "write_records_csv",
    "write_report_json",
    "z_of_lambda",
]
