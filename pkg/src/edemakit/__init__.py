"""Toolkit for grading pulmonary edema severity on chest radiographs.

Covers the data-production side (rule-based report labelling, cohort
construction, patient-grouped folds, consensus labelling) and the evaluation
side (ROC/AUC, DeLong comparison, agreement statistics) plus a small
weighted cross-entropy baseline classifier and synthetic data generators.
"""

from edemakit.severity import SEVERITY_NAMES, Severity

__all__ = ["Severity", "SEVERITY_NAMES"]
__version__ = "0.1.0"
