"""Evaluation statistics for four-level severity predictions."""

from edemakit.metrics.agreement import ConfusionMatrix, Rates, cohen_kappa_quadratic, confusion_matrix, prf_counts
from edemakit.metrics.delong import DegenerateVarianceError, DeLongResult, delong_paired_test
from edemakit.metrics.roc import (
    SEVERITY_COMPARISONS,
    Comparison,
    RocResult,
    ScoredSample,
    auc_rank,
    comparison_arrays,
    roc_auc,
    scalarize,
)
from edemakit.metrics.stattests import (
    SignificanceConfig,
    aggregate_folds,
    bonferroni_threshold,
    chi_squared_test,
    two_sample_t_test,
)
from edemakit.metrics.suite import compare_models, evaluation_report

__all__ = [
    "SEVERITY_COMPARISONS",
    "Comparison",
    "ConfusionMatrix",
    "DeLongResult",
    "DegenerateVarianceError",
    "Rates",
    "RocResult",
    "ScoredSample",
    "SignificanceConfig",
    "aggregate_folds",
    "auc_rank",
    "bonferroni_threshold",
    "chi_squared_test",
    "cohen_kappa_quadratic",
    "compare_models",
    "comparison_arrays",
    "confusion_matrix",
    "delong_paired_test",
    "evaluation_report",
    "prf_counts",
    "roc_auc",
    "scalarize",
    "two_sample_t_test",
]
