"""Confusion matrices, quadratic-weighted kappa and per-class rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from edemakit.severity import N_LEVELS


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[predicted, true]``.

    Rows are predicted levels and columns true levels, so a row fraction is
    "of the images predicted as this level, the share that truly belongs to
    each column".
    """

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _normalize(self, axis: int) -> list[list[Optional[float]]]:
        sums = self.counts.sum(axis=axis)
        out = []
        for i in range(self.counts.shape[0]):
            row = []
            for j in range(self.counts.shape[1]):
                denom = sums[i] if axis == 1 else sums[j]
                row.append(None if denom == 0 else float(self.counts[i, j] / denom))
            out.append(row)
        return out

    @property
    def row_fractions(self) -> list[list[Optional[float]]]:
        """Fractions over each predicted row; None where a level was never predicted."""
        return self._normalize(axis=1)

    @property
    def column_fractions(self) -> list[list[Optional[float]]]:
        """Fractions over each true column (the rows-are-truth convention, transposed)."""
        return self._normalize(axis=0)

    def to_dict(self) -> dict:
        return {
            "convention": "rows=predicted, columns=true; fractions divide by the row total",
            "counts": self.counts.astype(int).tolist(),
            "row_fractions": self.row_fractions,
        }


def _as_levels(seq, name, k):
    arr = np.asarray(seq)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if arr.size and (arr.min() < 0 or arr.max() >= k or not np.all(arr == arr.astype(np.int64))):
        raise ValueError(f"{name} entries must be integers in 0..{k - 1}")
    return arr.astype(np.int64)


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int], levels: int = N_LEVELS) -> ConfusionMatrix:
    t = _as_levels(truth, "truth", levels)
    p = _as_levels(predicted, "predicted", levels)
    if t.size != p.size:
        raise ValueError(f"length mismatch: {t.size} truths vs {p.size} predictions")
    if t.size == 0:
        raise ValueError("confusion matrix needs at least one sample")
    counts = np.zeros((levels, levels), dtype=np.int64)
    np.add.at(counts, (p, t), 1)
    return ConfusionMatrix(counts)


def cohen_kappa_quadratic(a: Sequence[int], b: Sequence[int], levels: int = N_LEVELS) -> float:
    """Cohen's kappa with agreement weights 1 - (i - j)^2 / (k - 1)^2."""
    x = _as_levels(a, "a", levels)
    y = _as_levels(b, "b", levels)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        raise ValueError("kappa needs at least one pair")
    idx = np.arange(levels)
    w = 1.0 - (idx[:, None] - idx[None, :]) ** 2 / (levels - 1) ** 2
    obs = np.zeros((levels, levels))
    np.add.at(obs, (x, y), 1.0)
    obs /= x.size
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0))
    po = float((w * obs).sum())
    pe = float((w * expected).sum())
    if np.array_equal(x, y):
        return 1.0
    if pe >= 1.0:
        raise ZeroDivisionError("expected weighted agreement is 1; kappa undefined")
    return (po - pe) / (1.0 - pe)


@dataclass(frozen=True)
class Rates:
    precision: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]


def _ratio(num: int, denom: int) -> Optional[float]:
    return None if denom == 0 else num / denom


def prf_counts(tp: int, fp: int, tn: int, fn: int) -> Rates:
    """Precision, sensitivity and specificity; a ratio with a zero denominator is None."""
    for name, v in (("tp", tp), ("fp", fp), ("tn", tn), ("fn", fn)):
        if int(v) != v or v < 0:
            raise ValueError(f"{name} must be a non-negative integer")
    return Rates(
        precision=_ratio(tp, tp + fp),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
    )
