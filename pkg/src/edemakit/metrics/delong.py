"""DeLong's nonparametric test for two correlated AUCs on the same samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from edemakit.metrics.distributions import normal_two_sided_p


class DegenerateVarianceError(ArithmeticError):
    """The variance of the AUC difference is zero while the AUCs differ."""


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    cov: float
    z: float
    p: float

    @property
    def auc_diff(self) -> float:
        return self.auc_a - self.auc_b


def psi_matrix(pos_scores: np.ndarray, neg_scores: np.ndarray) -> np.ndarray:
    """Kernel psi(x_i, y_j): 1 if the positive outscores the negative, 0.5 on ties, else 0."""
    diff = pos_scores[:, None] - neg_scores[None, :]
    return (diff > 0).astype(np.float64) + 0.5 * (diff == 0)


def structural_components(truth, scores):
    """Per-positive (V10) and per-negative (V01) structural components and the AUC."""
    truth = np.asarray(truth)
    scores = np.asarray(scores, dtype=np.float64)
    psi = psi_matrix(scores[truth == 1], scores[truth == 0])
    v10 = psi.mean(axis=1)
    v01 = psi.mean(axis=0)
    return v10, v01, float(psi.mean())


def delong_paired_test(truth, scores_a, scores_b) -> DeLongResult:
    """Two-sided DeLong test of equal AUC for two score sets over the same samples.

    Raises ValueError with fewer than two positives or negatives, and
    DegenerateVarianceError when the difference has zero variance but the
    AUCs are not equal (identical score sets return p = 1.0).
    """
    truth = np.asarray(truth)
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if not (truth.shape == a.shape == b.shape) or truth.ndim != 1:
        raise ValueError("truth and both score lists must be aligned 1-d sequences")
    if not np.all((truth == 0) | (truth == 1)):
        raise ValueError("truth must be binary 0/1")
    m = int((truth == 1).sum())
    n = int((truth == 0).sum())
    if m < 2 or n < 2:
        raise ValueError(f"DeLong test needs >= 2 positives and >= 2 negatives (got {m}, {n})")

    v10_a, v01_a, auc_a = structural_components(truth, a)
    v10_b, v01_b, auc_b = structural_components(truth, b)
    s10 = np.cov(np.vstack([v10_a, v10_b]), ddof=1)
    s01 = np.cov(np.vstack([v01_a, v01_b]), ddof=1)
    s = s10 / m + s01 / n
    var_a, var_b, cov = float(s[0, 0]), float(s[1, 1]), float(s[0, 1])
    var_diff = var_a + var_b - 2.0 * cov
    if var_diff <= 0.0:
        if auc_a == auc_b:
            return DeLongResult(auc_a, auc_b, var_a, var_b, cov, 0.0, 1.0)
        raise DegenerateVarianceError(
            f"AUCs differ ({auc_a!r} vs {auc_b!r}) but the difference has variance {var_diff!r}"
        )
    z = (auc_a - auc_b) / math.sqrt(var_diff)
    return DeLongResult(auc_a, auc_b, var_a, var_b, cov, z, normal_two_sided_p(z))
