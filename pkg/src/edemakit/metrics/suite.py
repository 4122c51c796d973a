"""Two-model evaluation report over the fixed nine-comparison suite."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from edemakit.metrics.agreement import cohen_kappa_quadratic, confusion_matrix
from edemakit.metrics.delong import delong_paired_test
from edemakit.metrics.roc import SEVERITY_COMPARISONS, Comparison, ScoredSample, comparison_arrays, roc_auc
from edemakit.metrics.stattests import SignificanceConfig, aggregate_folds, bonferroni_threshold


def predicted_levels(samples: Sequence[ScoredSample]) -> np.ndarray:
    """Argmax level per sample; ties go to the lower level."""
    return np.array([int(np.argmax(s.scores)) for s in samples], dtype=np.int64)


def align(samples_a: Sequence[ScoredSample], samples_b: Sequence[ScoredSample]):
    """Pair two score sets by image_id, in the image order of ``samples_a``."""
    by_id = {s.image_id: s for s in samples_b}
    if len(by_id) != len(samples_b):
        raise ValueError("duplicate image_id in model B scores")
    ids_a = [s.image_id for s in samples_a]
    if len(set(ids_a)) != len(ids_a):
        raise ValueError("duplicate image_id in model A scores")
    if set(ids_a) != set(by_id):
        missing = sorted(set(ids_a) ^ set(by_id))
        raise ValueError(f"score files cover different images, e.g. {missing[:3]}")
    b = []
    for s in samples_a:
        other = by_id[s.image_id]
        if other.true_label != s.true_label:
            raise ValueError(f"{s.image_id}: true_label differs between score files")
        b.append(other)
    return list(samples_a), b


def compare_models(
    samples_a: Sequence[ScoredSample],
    samples_b: Sequence[ScoredSample],
    comparisons: Sequence[Comparison] = SEVERITY_COMPARISONS,
    significance: SignificanceConfig = SignificanceConfig(),
    mode: str = "ratio",
):
    """AUC of both models plus the DeLong p-value for every comparison.

    Returns the table rows and the ROC curves keyed by ``(model, comparison name)``.
    Comparisons lacking two positives and two negatives carry AUCs where
    computable but a null p-value and a ``note``.
    """
    a, b = align(samples_a, samples_b)
    threshold = bonferroni_threshold(significance)
    rows = []
    curves = {}
    for cmp in comparisons:
        ya, sa = comparison_arrays(a, cmp, mode)
        yb, sb = comparison_arrays(b, cmp, mode)
        n_pos = int(ya.sum())
        n_neg = int(ya.size - n_pos)
        row = {
            "comparison": cmp.name,
            "neg": sorted(cmp.neg_set),
            "pos": sorted(cmp.pos_set),
            "n_neg": n_neg,
            "n_pos": n_pos,
            "auc_a": None,
            "auc_b": None,
            "z": None,
            "p": None,
            "significant": None,
        }
        if n_pos >= 1 and n_neg >= 1:
            ra, rb = roc_auc(ya, sa), roc_auc(yb, sb)
            curves[("a", cmp.name)] = ra
            curves[("b", cmp.name)] = rb
            row["auc_a"], row["auc_b"] = ra.auc, rb.auc
        if n_pos >= 2 and n_neg >= 2:
            d = delong_paired_test(ya, sa, sb)
            row["z"], row["p"] = d.z, d.p
            row["significant"] = bool(d.p < threshold)
        else:
            row["note"] = "fewer than two positives or negatives; DeLong test skipped"
        rows.append(row)
    return rows, curves


def evaluation_report(
    samples_a: Sequence[ScoredSample],
    samples_b: Sequence[ScoredSample],
    significance: SignificanceConfig = SignificanceConfig(),
    fold_groups_a: Sequence[Sequence[ScoredSample]] | None = None,
    fold_groups_b: Sequence[Sequence[ScoredSample]] | None = None,
    mode: str = "ratio",
):
    """Full report: nine-comparison AUC table, confusion matrices and both kappas.

    When per-fold sample groups are given for both models, a per-comparison
    mean and sample standard deviation of the fold AUCs is added.
    """
    a, b = align(samples_a, samples_b)
    rows, curves = compare_models(a, b, significance=significance, mode=mode)
    truth = np.array([s.true_label for s in a], dtype=np.int64)
    pred_a, pred_b = predicted_levels(a), predicted_levels(b)
    report = {
        "n_images": len(a),
        "score_mode": mode,
        "significance": {
            "alpha": significance.alpha,
            "m": significance.m,
            "threshold": bonferroni_threshold(significance),
            "note": "threshold is alpha / m unrounded; 0.05 / 9 is commonly printed as .005",
        },
        "comparisons": rows,
        "confusion_matrix": {
            "a": confusion_matrix(truth, pred_a).to_dict(),
            "b": confusion_matrix(truth, pred_b).to_dict(),
        },
        "kappa_quadratic": {
            "a": cohen_kappa_quadratic(pred_a, truth),
            "b": cohen_kappa_quadratic(pred_b, truth),
        },
    }
    if fold_groups_a and fold_groups_b:
        report["folds"] = fold_aggregate(fold_groups_a, fold_groups_b, mode=mode)
    return report, curves


def fold_aggregate(groups_a, groups_b, mode: str = "ratio"):
    """Mean and sample std of per-fold AUCs for each comparison and model."""
    if len(groups_a) != len(groups_b):
        raise ValueError("both models need the same number of folds")
    per_cmp = {cmp.name: {"a": [], "b": []} for cmp in SEVERITY_COMPARISONS}
    for ga, gb in zip(groups_a, groups_b):
        ga, gb = align(ga, gb)
        for cmp in SEVERITY_COMPARISONS:
            for key, group in (("a", ga), ("b", gb)):
                y, s = comparison_arrays(group, cmp, mode)
                if y.size and 0 < y.sum() < y.size:
                    per_cmp[cmp.name][key].append(roc_auc(y, s).auc)
    out = []
    for cmp in SEVERITY_COMPARISONS:
        entry = {"comparison": cmp.name}
        for key in ("a", "b"):
            vals = per_cmp[cmp.name][key]
            if vals:
                agg = aggregate_folds(vals)
                entry[key] = {"mean": agg.mean, "sample_std": agg.sample_std, "n_folds": agg.n,
                              "display": agg.format()}
            else:
                entry[key] = None
        out.append(entry)
    return {"n_folds": len(groups_a), "comparisons": out}
