"""latentperm: group-level out-of-distribution testing for trained models.

Computes ensembles of OoD metrics (nearest-anchor distances, reconstruction
errors, encode-decode manifold displacement, softmax/evidential uncertainty)
over exported latent responses, and decides whether a group of samples is
out-of-distribution via permutation-based hypothesis tests (MRPP, rank AUC,
or mean difference) between sample groups.
"""

__version__ = "0.1.0"

from .errors import (
    ClampedSampleWarning,
    ConfigError,
    DataError,
    RankDeficientWarning,
    ZeroDirectionWarning,
    ZeroNormCosineWarning,
)
from .responses import (
    Column,
    LatentResponseSet,
    metrics_to_response_set,
    read_response_set,
    select_group,
    write_response_set,
)
from .neighbors import NearestAnchors, QueryCounters, build_index, mean_knn_distance
from .metrics import (
    MetricNormalizer,
    MetricSpec,
    MetricVector,
    NormalizationParams,
    OodMetricExtractor,
    apply_normalization,
    compute_metrics,
    default_metric_specs,
    edl_uncertainty,
    fit_normalization,
    manifold_distance,
    metric_matrix,
    one_minus_max_softmax,
    reconstruction_error,
)
from .stats import (
    EnsembleAucResult,
    GroupAssignment,
    auc_statistic,
    dissimilarity_matrix,
    ensemble_auc,
    mean_difference_statistic,
    mrpp_delta,
    rank_auc,
)
from .permtest import PermutationConfig, ReportFlags, TestReport, exact_null, permutation_test
from .config import ExperimentConfig, SourceConfig, load_config, parse_config, validate_config
from .runner import (
    ComparisonMatrix,
    EnsembleAucReport,
    MetricPipeline,
    emit_ensemble_report,
    emit_metric_sets,
    emit_reports,
    read_matrix_csv,
    run_cell,
    run_ensemble_auc,
    run_matrix,
)

__all__ = [
    "__version__",
    "ClampedSampleWarning",
    "Column",
    "ComparisonMatrix",
    "ConfigError",
    "DataError",
    "EnsembleAucReport",
    "EnsembleAucResult",
    "ExperimentConfig",
    "GroupAssignment",
    "LatentResponseSet",
    "MetricNormalizer",
    "MetricPipeline",
    "MetricSpec",
    "MetricVector",
    "NearestAnchors",
    "NormalizationParams",
    "OodMetricExtractor",
    "PermutationConfig",
    "QueryCounters",
    "RankDeficientWarning",
    "ReportFlags",
    "SourceConfig",
    "TestReport",
    "ZeroDirectionWarning",
    "ZeroNormCosineWarning",
    "apply_normalization",
    "auc_statistic",
    "build_index",
    "compute_metrics",
    "default_metric_specs",
    "dissimilarity_matrix",
    "edl_uncertainty",
    "emit_ensemble_report",
    "emit_metric_sets",
    "emit_reports",
    "ensemble_auc",
    "exact_null",
    "fit_normalization",
    "load_config",
    "manifold_distance",
    "mean_difference_statistic",
    "mean_knn_distance",
    "metric_matrix",
    "metrics_to_response_set",
    "mrpp_delta",
    "one_minus_max_softmax",
    "parse_config",
    "permutation_test",
    "rank_auc",
    "read_matrix_csv",
    "read_response_set",
    "reconstruction_error",
    "run_cell",
    "run_ensemble_auc",
    "run_matrix",
    "select_group",
    "validate_config",
    "write_response_set",
]
