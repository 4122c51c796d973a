"""Pairwise and dichotomized ROC analysis of four-level severity scores."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from edemakit.severity import N_LEVELS

SCORE_SUM_TOL = 1e-9
AUC_AGREEMENT_TOL = 1e-12


@dataclass(frozen=True)
class ScoredSample:
    image_id: str
    true_label: int
    scores: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0 <= int(self.true_label) < N_LEVELS:
            raise ValueError(f"{self.image_id}: true_label {self.true_label} outside 0-3")
        if len(self.scores) != N_LEVELS:
            raise ValueError(f"{self.image_id}: expected 4 scores, got {len(self.scores)}")
        if any(not np.isfinite(p) or p < 0 for p in self.scores):
            raise ValueError(f"{self.image_id}: scores must be finite and non-negative")
        if abs(sum(self.scores) - 1.0) > SCORE_SUM_TOL:
            raise ValueError(f"{self.image_id}: scores sum to {sum(self.scores)!r}, not 1")


@dataclass(frozen=True)
class Comparison:
    neg_set: frozenset
    pos_set: frozenset

    def __post_init__(self):
        object.__setattr__(self, "neg_set", frozenset(int(c) for c in self.neg_set))
        object.__setattr__(self, "pos_set", frozenset(int(c) for c in self.pos_set))
        if not self.neg_set or not self.pos_set:
            raise ValueError("comparison sides must be non-empty")
        if self.neg_set & self.pos_set:
            raise ValueError("comparison sides must be disjoint")
        if not (self.neg_set | self.pos_set) <= set(range(N_LEVELS)):
            raise ValueError("comparison classes must lie in 0-3")

    @property
    def name(self) -> str:
        def side(s):
            return ", ".join(str(c) for c in sorted(s))

        return f"{side(self.neg_set)} vs {side(self.pos_set)}"


# six pairwise comparisons followed by the three dichotomies, in report order
SEVERITY_COMPARISONS: tuple[Comparison, ...] = (
    Comparison({0}, {1}),
    Comparison({0}, {2}),
    Comparison({0}, {3}),
    Comparison({1}, {2}),
    Comparison({1}, {3}),
    Comparison({2}, {3}),
    Comparison({0}, {1, 2, 3}),
    Comparison({0, 1}, {2, 3}),
    Comparison({0, 1, 2}, {3}),
)


def scalarize(sample: ScoredSample, cmp: Comparison, mode: str = "ratio"):
    """Reduce a 4-class probability vector to a binary label and a scalar score.

    Returns None when the sample's true class takes no part in ``cmp``.
    ``mode="ratio"`` scores by the positive side's share of the probability
    mass held by the two sides; ``mode="expected"`` uses the expected severity
    sum(c * p_c) regardless of the comparison.
    """
    label = int(sample.true_label)
    if label not in cmp.neg_set and label not in cmp.pos_set:
        return None
    binary = 1 if label in cmp.pos_set else 0
    p = sample.scores
    if mode == "ratio":
        pos = sum(p[c] for c in cmp.pos_set)
        neg = sum(p[c] for c in cmp.neg_set)
        denom = pos + neg
        score = 0.5 if denom == 0 else pos / denom
    elif mode == "expected":
        score = float(sum(c * pc for c, pc in enumerate(p)))
    else:
        raise ValueError(f"unknown scalarize mode {mode!r}")
    return binary, score


def comparison_arrays(samples: Iterable[ScoredSample], cmp: Comparison, mode: str = "ratio"):
    """Binary labels and scalar scores for all samples taking part in ``cmp``."""
    labels, scores = [], []
    for s in samples:
        r = scalarize(s, cmp, mode)
        if r is not None:
            labels.append(r[0])
            scores.append(r[1])
    return np.asarray(labels, dtype=np.int64), np.asarray(scores, dtype=np.float64)


@dataclass(frozen=True)
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    auc_trapezoid: float
    n_pos: int
    n_neg: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _split(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError("labels and scores must be aligned 1-d sequences")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pos = labels == 1
    if not np.all(pos | (labels == 0)):
        raise ValueError("binary labels must be 0 or 1")
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs at least one positive and one negative")
    return labels, scores, pos, n_pos, n_neg


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their rank positions."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    n = len(x)
    ranks_sorted = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and sx[j] == sx[i]:
            j += 1
        ranks_sorted[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks_sorted
    return out


def auc_rank(labels: Sequence[int], scores: Sequence[float]) -> float:
    """(concordant + ties / 2) / (n_pos * n_neg), via midranks."""
    _, scores, pos, n_pos, n_neg = _split(labels, scores)
    r = midranks(scores)
    # rank sums are half-integers, so doubling keeps the arithmetic exact
    u2 = int(round(2.0 * r[pos].sum())) - n_pos * (n_pos + 1)
    return float(Fraction(u2, 2 * n_pos * n_neg))


def roc_curve(labels: Sequence[int], scores: Sequence[float]):
    """ROC operating points swept over every distinct threshold, highest first.

    Returns integer false/true positive counts plus the thresholds; tied
    scores move the curve along a single diagonal segment.
    """
    labels, scores, pos, n_pos, n_neg = _split(labels, scores)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = pos[order].astype(np.int64)
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # keep the last index of every run of equal scores
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tps = np.r_[0, tp[last]]
    fps = np.r_[0, fp[last]]
    thresholds = np.r_[np.inf, s[last]]
    return fps, tps, thresholds, n_pos, n_neg


def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> RocResult:
    """ROC curve and AUC; the rank form is returned, the trapezoid form cross-checks it."""
    fps, tps, thresholds, n_pos, n_neg = roc_curve(labels, scores)
    fpr = fps / n_neg
    tpr = tps / n_pos
    auc_trap = float(np.trapezoid(tpr, fpr))
    auc = auc_rank(labels, scores)
    if abs(auc - auc_trap) > AUC_AGREEMENT_TOL:
        raise ArithmeticError(f"trapezoid AUC {auc_trap!r} disagrees with rank AUC {auc!r}")
    return RocResult(
        fpr=fpr,
        tpr=tpr,
        thresholds=thresholds,
        auc=auc,
        auc_trapezoid=auc_trap,
        n_pos=n_pos,
        n_neg=n_neg,
    )
