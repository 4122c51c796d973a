"""Study manifests, enrollment filters, cohort statistics and patient-grouped folds.

Manifest CSV columns::

    patient_id,study_id,image_id,acquisition_time,view,dx_codes,report_id,label

``acquisition_time`` is ISO-8601, ``dx_codes`` is ``;``-separated and
``label`` is empty or a severity 0-3.
"""

from __future__ import annotations

import csv
import io
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from edemakit.severity import N_LEVELS, Severity

MANIFEST_COLUMNS = (
    "patient_id", "study_id", "image_id", "acquisition_time", "view", "dx_codes", "report_id", "label",
)
VIEWS = ("frontal", "lateral", "other")

# ICD-10 heart failure codes (I50.x) and their ICD-9 counterparts (428.x);
# matching is exact, so producers must emit codes in this dotted form
DEFAULT_CHF_CODES = frozenset(
    ["I50.1", "I50.20", "I50.21", "I50.22", "I50.23", "I50.30", "I50.31", "I50.32", "I50.33",
     "I50.40", "I50.41", "I50.42", "I50.43", "I50.810", "I50.811", "I50.812", "I50.813",
     "I50.814", "I50.82", "I50.83", "I50.84", "I50.89", "I50.9",
     "428.0", "428.1", "428.20", "428.21", "428.22", "428.23", "428.30", "428.31", "428.32",
     "428.33", "428.40", "428.41", "428.42", "428.43", "428.9"]
)


class ManifestError(ValueError):
    """A manifest row failed validation; ``line`` is the 1-based file line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class StudyRecord:
    patient_id: str
    study_id: str
    image_id: str
    acquisition_time: datetime
    view: str
    visit_dx_codes: frozenset
    report_id: str
    label: Optional[Severity] = None


def _parse_row(row: dict, line: int) -> StudyRecord:
    for col in ("patient_id", "study_id", "image_id", "report_id"):
        if not row[col]:
            raise ManifestError(f"empty {col}", line)
    view = row["view"].strip().lower()
    if view not in VIEWS:
        raise ManifestError(f"view {row['view']!r} not one of {', '.join(VIEWS)}", line)
    raw_time = row["acquisition_time"].strip()
    if not raw_time:
        raise ManifestError("missing acquisition_time", line)
    try:
        when = datetime.fromisoformat(raw_time)
    except ValueError:
        raise ManifestError(f"acquisition_time {raw_time!r} is not ISO-8601", line) from None
    label = None
    if row["label"].strip():
        try:
            label = Severity.parse(row["label"])
        except ValueError as exc:
            raise ManifestError(str(exc), line) from None
    codes = frozenset(c.strip() for c in row["dx_codes"].split(";") if c.strip())
    return StudyRecord(
        patient_id=row["patient_id"],
        study_id=row["study_id"],
        image_id=row["image_id"],
        acquisition_time=when,
        view=view,
        visit_dx_codes=codes,
        report_id=row["report_id"],
        label=label,
    )


def parse_manifest(text: str) -> list[StudyRecord]:
    """Parse manifest CSV text; see :func:`load_manifest`."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ManifestError("manifest is empty (no header)", 1)
    missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ManifestError(f"header lacks column(s) {', '.join(missing)}", 1)
    records = []
    seen_images: dict[str, int] = {}
    study_owner: dict[str, tuple[str, str, int]] = {}
    for row in reader:
        line = reader.line_num
        if None in row or any(v is None for v in row.values()):
            raise ManifestError("wrong number of fields", line)
        rec = _parse_row(row, line)
        if rec.image_id in seen_images:
            raise ManifestError(f"duplicate image_id {rec.image_id!r} (first seen on line {seen_images[rec.image_id]})", line)
        seen_images[rec.image_id] = line
        owner = study_owner.setdefault(rec.study_id, (rec.patient_id, rec.report_id, line))
        if owner[0] != rec.patient_id:
            raise ManifestError(
                f"study {rec.study_id!r} spans patients {owner[0]!r} and {rec.patient_id!r}", line
            )
        if owner[1] != rec.report_id:
            raise ManifestError(
                f"study {rec.study_id!r} links reports {owner[1]!r} and {rec.report_id!r}", line
            )
        records.append(rec)
    return records


def load_manifest(path) -> list[StudyRecord]:
    """Read a manifest CSV into StudyRecords, one per row in file order.

    Raises ManifestError naming the offending line for malformed rows,
    duplicate image ids, and studies spanning two patients or reports.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def format_manifest(records: Iterable[StudyRecord]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in records:
        w.writerow([
            r.patient_id, r.study_id, r.image_id, r.acquisition_time.isoformat(timespec="minutes"),
            r.view, ";".join(sorted(r.visit_dx_codes)), r.report_id,
            "" if r.label is None else int(r.label),
        ])
    return out.getvalue()


def write_manifest(records: Iterable[StudyRecord], path) -> None:
    Path(path).write_text(format_manifest(records), encoding="utf-8")


def filter_frontal(records: Sequence[StudyRecord]) -> tuple[list[StudyRecord], int]:
    """Frontal-view records in input order, plus the number excluded."""
    kept = [r for r in records if r.view == "frontal"]
    return kept, len(records) - len(kept)


def filter_chf(records: Sequence[StudyRecord], chf_codes: Iterable[str] = DEFAULT_CHF_CODES):
    """Split records into (CHF cohort, complement) by visit diagnosis code membership."""
    codes = frozenset(chf_codes)
    if not codes:
        raise ValueError("chf_codes must not be empty")
    chf, other = [], []
    for r in records:
        (chf if r.visit_dx_codes & codes else other).append(r)
    return chf, other


def attach_report_labels(records: Sequence[StudyRecord], report_labels: Mapping[str, int]) -> list[StudyRecord]:
    """Give every image the label of its report; images of unlabeled reports keep their label."""
    out = []
    for r in records:
        if r.report_id in report_labels:
            out.append(replace(r, label=Severity.parse(report_labels[r.report_id])))
        else:
            out.append(r)
    return out


def _summary(values: Sequence[float]) -> dict:
    if not values:
        return {"n": 0, "mean": None, "median": None, "min": None, "max": None}
    return {
        "n": len(values),
        "mean": statistics.fmean(values),
        "median": statistics.median(values),
        "min": min(values),
        "max": max(values),
    }


@dataclass(frozen=True)
class CohortStats:
    n_patients: int
    n_images: int
    images_per_patient: dict
    images_per_patient_summary: dict
    interval_summary: dict
    frac_within_1_day: Optional[float]
    frac_within_30_days: Optional[float]
    intervals_per_patient: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "n_images": self.n_images,
            "images_per_patient_histogram": {str(k): v for k, v in sorted(self.images_per_patient.items())},
            "images_per_patient": self.images_per_patient_summary,
            "interval_days": self.interval_summary,
            "frac_intervals_within_1_day": self.frac_within_1_day,
            "frac_intervals_within_30_days": self.frac_within_30_days,
        }


def cohort_stats(records: Sequence[StudyRecord]) -> CohortStats:
    """Images per patient and gaps between consecutive exams of the same patient.

    Exams are ordered by acquisition time, ties by image_id. Gaps are in
    fractional days and pooled across patients; the within-1-day and
    within-30-days fractions are inclusive and computed over pooled gaps.
    """
    by_patient: dict[str, list[StudyRecord]] = defaultdict(list)
    for r in records:
        by_patient[r.patient_id].append(r)
    counts = Counter(len(v) for v in by_patient.values())
    per_patient_counts = [len(v) for v in by_patient.values()]
    intervals_per_patient = {}
    pooled: list[float] = []
    for pid, recs in sorted(by_patient.items()):
        recs = sorted(recs, key=lambda r: (r.acquisition_time, r.image_id))
        gaps = [
            (b.acquisition_time - a.acquisition_time).total_seconds() / 86400.0
            for a, b in zip(recs, recs[1:])
        ]
        intervals_per_patient[pid] = gaps
        pooled.extend(gaps)
    within1 = within30 = None
    if pooled:
        within1 = sum(g <= 1.0 for g in pooled) / len(pooled)
        within30 = sum(g <= 30.0 for g in pooled) / len(pooled)
    return CohortStats(
        n_patients=len(by_patient),
        n_images=len(records),
        images_per_patient=dict(sorted(counts.items())),
        images_per_patient_summary=_summary(per_patient_counts),
        interval_summary=_summary(pooled),
        frac_within_1_day=within1,
        frac_within_30_days=within30,
        intervals_per_patient=intervals_per_patient,
    )


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict
    patient_fold: dict

    def fold_patients(self) -> list[int]:
        c = Counter(self.patient_fold.values())
        return [c.get(f, 0) for f in range(self.k)]

    def to_csv(self, records: Sequence[StudyRecord] | None = None) -> str:
        """``image_id,fold`` rows, in record order when records are given."""
        ids = [r.image_id for r in records] if records is not None else sorted(self.assignment)
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["image_id", "fold"])
        for i in ids:
            w.writerow([i, self.assignment[i]])
        return out.getvalue()


def group_kfold(records: Sequence[StudyRecord], k: int, seed: int) -> FoldAssignment:
    """Deal patients round-robin into ``k`` folds after a seeded shuffle.

    Patient ids are sorted before shuffling with ``numpy.random.default_rng(seed)``
    (PCG64), so the result depends only on the set of patients, ``k`` and
    ``seed``. Fold patient counts differ by at most one.
    """
    if int(k) != k or k < 2:
        raise ValueError(f"k must be an integer >= 2, got {k}")
    patients = sorted({r.patient_id for r in records})
    if len(patients) < k:
        raise ValueError(f"{len(patients)} patients cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(patients))
    patient_fold = {patients[idx]: pos % k for pos, idx in enumerate(order)}
    assignment = {r.image_id: patient_fold[r.patient_id] for r in records}
    return FoldAssignment(k=int(k), assignment=assignment, patient_fold=patient_fold)


def read_folds(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames or "fold" not in reader.fieldnames:
            raise ManifestError("fold file needs columns image_id,fold", 1)
        out = {}
        for row in reader:
            try:
                out[row["image_id"]] = int(row["fold"])
            except (TypeError, ValueError):
                raise ManifestError(f"fold {row['fold']!r} is not an integer", reader.line_num) from None
        return out


def fold_distribution(assignment: FoldAssignment, records: Sequence[StudyRecord]) -> dict:
    """Per-fold counts of each severity, unlabeled images and patients, plus a totals row."""
    folds = []
    for f in range(assignment.k):
        folds.append({"fold": f, "n_patients": 0, "counts": [0] * N_LEVELS, "unlabeled": 0, "total_images": 0})
    patients_in = [set() for _ in range(assignment.k)]
    for r in records:
        f = assignment.assignment[r.image_id]
        row = folds[f]
        patients_in[f].add(r.patient_id)
        row["total_images"] += 1
        if r.label is None:
            row["unlabeled"] += 1
        else:
            row["counts"][int(r.label)] += 1
    for f, row in enumerate(folds):
        row["n_patients"] = len(patients_in[f])
    counts = [sum(row["counts"][c] for row in folds) for c in range(N_LEVELS)]
    labeled = sum(counts)
    total = {
        "n_patients": len({r.patient_id for r in records}),
        "counts": counts,
        "unlabeled": sum(row["unlabeled"] for row in folds),
        "total_images": len(records),
        "percentages": [None if labeled == 0 else 100.0 * c / labeled for c in counts],
    }
    return {"k": assignment.k, "folds": folds, "total": total}


def format_distribution_csv(dist: dict) -> str:
    """Render a fold distribution like a severity-across-folds table."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["fold", "n_patients", "0", "1", "2", "3", "unlabeled", "total_images"])
    for row in dist["folds"]:
        w.writerow([f"Fold {row['fold'] + 1}", row["n_patients"], *row["counts"], row["unlabeled"], row["total_images"]])
    t = dist["total"]
    cells = [
        f"{c} ({p:.2f}%)" if p is not None else str(c) for c, p in zip(t["counts"], t["percentages"])
    ]
    w.writerow(["Sub-total", t["n_patients"], *cells, t["unlabeled"], t["total_images"]])
    return out.getvalue()
