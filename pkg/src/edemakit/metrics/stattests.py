"""Significance thresholds, fold aggregation and the cohort comparison tests."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from edemakit.metrics.distributions import chi2_sf, t_two_sided_p


@dataclass(frozen=True)
class SignificanceConfig:
    alpha: float = 0.05
    m: int = 9

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"comparison count must be a positive integer, got {self.m}")


def bonferroni_threshold(cfg: SignificanceConfig = SignificanceConfig()) -> float:
    """alpha / m, unrounded."""
    return cfg.alpha / cfg.m


@dataclass(frozen=True)
class FoldSummary:
    mean: float
    sample_std: Optional[float]
    n: int

    def format(self, digits: int = 2) -> str:
        if self.sample_std is None:
            return f"{self.mean:.{digits}f}"
        return f"{self.mean:.{digits}f} (± {self.sample_std:.{digits}f})"


def aggregate_folds(values: Sequence[float]) -> FoldSummary:
    # statistics works in exact rationals, so equal folds give a std of exactly 0
    v = [float(x) for x in values]
    if not v:
        raise ValueError("no fold values to aggregate")
    std = statistics.stdev(v) if len(v) >= 2 else None
    return FoldSummary(mean=statistics.fmean(v), sample_std=std, n=len(v))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float


def two_sample_t_test(a: Sequence[float], b: Sequence[float], equal_var: bool = True) -> TTestResult:
    """Two-sided two-sample t-test; pooled variance (Student) unless ``equal_var=False`` (Welch)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = x.size, y.size
    va, vb = x.var(ddof=1), y.var(ddof=1)
    diff = float(x.mean() - y.mean())
    if equal_var:
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        if pooled <= 0:
            raise ZeroDivisionError("pooled variance is zero")
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    else:
        sa, sb = va / na, vb / nb
        if sa + sb <= 0:
            raise ZeroDivisionError("both samples have zero variance")
        se = math.sqrt(sa + sb)
        df = float((sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1)))
    t = diff / se
    return TTestResult(t=t, df=df, p=t_two_sided_p(t, df))


@dataclass(frozen=True)
class ChiSquaredResult:
    chi2: float
    df: int
    p: float
    expected: np.ndarray


def chi_squared_test(table) -> ChiSquaredResult:
    """Pearson chi-squared test of independence on an r x c count table (no continuity correction)."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise ValueError("contingency table must be at least 2 x 2")
    if np.any(obs < 0) or not np.all(np.isfinite(obs)):
        raise ValueError("counts must be finite and non-negative")
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise ValueError("a row or column of the table sums to zero")
    expected = np.outer(rows, cols) / obs.sum()
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    df = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return ChiSquaredResult(chi2=chi2, df=df, p=chi2_sf(chi2, df), expected=expected)
