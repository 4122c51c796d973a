from collections import Counter
from dataclasses import fields
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edemakit.corpus import (
    ManifestError,
    StudyRecord,
    attach_report_labels,
    cohort_stats,
    filter_chf,
    filter_frontal,
    fold_distribution,
    format_manifest,
    group_kfold,
    load_manifest,
    parse_manifest,
)
from edemakit.severity import Severity

HEADER = "patient_id,study_id,image_id,acquisition_time,view,dx_codes,report_id,label\n"
T0 = datetime(2150, 1, 1, 8, 0)


def rec(pid, iid, *, study=None, view="frontal", codes=(), report=None, label=None, day=0.0):
    study = study or f"s-{iid}"
    return StudyRecord(
        patient_id=pid,
        study_id=study,
        image_id=iid,
        acquisition_time=T0 + timedelta(days=day),
        view=view,
        visit_dx_codes=frozenset(codes),
        report_id=report or f"r-{study}",
        label=None if label is None else Severity(label),
    )


class TestLoadManifest:
    def test_header_only(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(HEADER)
        assert load_manifest(p) == []

    def test_rows_in_order(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(
            HEADER
            + "p1,s1,i1,2150-01-01T08:00,frontal,I50.9;E11.9,r1,2\n"
            + "p1,s1,i2,2150-01-01T08:00,lateral,I50.9;E11.9,r1,\n"
            + "p2,s2,i3,2150-01-03T10:30,frontal,,r2,0\n"
        )
        recs = load_manifest(p)
        assert [r.image_id for r in recs] == ["i1", "i2", "i3"]
        assert recs[0].visit_dx_codes == {"I50.9", "E11.9"}
        assert recs[0].label == Severity.INTERSTITIAL_EDEMA
        assert recs[1].label is None and recs[2].visit_dx_codes == frozenset()

    def test_bad_view_names_line(self):
        with pytest.raises(ManifestError, match="line 3") as exc:
            parse_manifest(
                HEADER
                + "p1,s1,i1,2150-01-01T08:00,frontal,,r1,\n"
                + "p1,s2,i2,2150-01-01T09:00,oblique,,r2,\n"
            )
        assert exc.value.line == 3
        assert "oblique" in str(exc.value)

    @pytest.mark.parametrize(
        "rows,needle",
        [
            ("p1,s1,i1,2150-01-01T08:00,frontal,,r1,\np1,s2,i1,2150-01-02T08:00,frontal,,r2,\n", "duplicate image_id"),
            ("p1,s1,i1,2150-01-01T08:00,frontal,,r1,\np2,s1,i2,2150-01-01T08:00,frontal,,r1,\n", "spans patients"),
            ("p1,s1,i1,,frontal,,r1,\n", "missing acquisition_time"),
            ("p1,s1,i1,yesterday,frontal,,r1,\n", "ISO-8601"),
            ("p1,s1,i1,2150-01-01T08:00,frontal,,r1,5\n", "0-3"),
            ("p1,s1,i1,2150-01-01T08:00,frontal,,r1\n", "number of fields"),
        ],
    )
    def test_validation_errors(self, rows, needle):
        with pytest.raises(ManifestError, match=needle):
            parse_manifest(HEADER + rows)

    def test_missing_column(self):
        with pytest.raises(ManifestError, match="label"):
            parse_manifest("patient_id,study_id,image_id,acquisition_time,view,dx_codes,report_id\n")

    def test_roundtrip(self):
        recs = [rec("p1", "i1", codes=["I50.9"], label=1), rec("p2", "i2", view="lateral", day=1.5)]
        assert parse_manifest(format_manifest(recs)) == recs


class TestFilters:
    def test_all_frontal_identity(self):
        recs = [rec("p1", "i1"), rec("p2", "i2")]
        assert filter_frontal(recs) == (recs, 0)

    def test_two_lateral(self):
        recs = [rec("p", f"i{j}", view=v) for j, v in enumerate(
            ["frontal", "lateral", "frontal", "lateral", "frontal"])]
        kept, excluded = filter_frontal(recs)
        assert [r.image_id for r in kept] == ["i0", "i2", "i4"] and excluded == 2

    def test_enrollment_scale(self):
        # 369,071 collected radiographs with 121,646 non-frontal views
        recs = [rec("p", f"i{j}", view="lateral" if j < 121_646 else "frontal") for j in range(369_071)]
        kept, excluded = filter_frontal(recs)
        assert len(kept) == 247_425 and excluded == 121_646

    def test_chf_none(self):
        recs = [rec("p1", "i1", codes=["J18.9"]), rec("p2", "i2")]
        assert filter_chf(recs, {"I50.9"}) == ([], recs)

    def test_chf_single(self):
        r = rec("p1", "i1", codes=["I50.9"])
        assert filter_chf([r], {"I50.9"}) == ([r], [])

    def test_chf_patients(self):
        recs = []
        for p in range(10):
            for j in range(3):
                codes = ["I50.9"] if p < 4 and j == 1 else ["R06.02"]
                recs.append(rec(f"p{p}", f"p{p}i{j}", codes=codes))
        chf, rest = filter_chf(recs, {"I50.9"})
        assert {r.patient_id for r in chf} == {"p0", "p1", "p2", "p3"}
        assert len(chf) + len(rest) == len(recs)

    def test_chf_empty_codes(self):
        with pytest.raises(ValueError):
            filter_chf([rec("p", "i")], set())

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.sampled_from(["frontal", "lateral", "other"]), st.booleans()), max_size=30))
    def test_idempotent(self, spec):
        recs = [rec("p", f"i{j}", view=v, codes=["I50.9"] if c else []) for j, (v, c) in enumerate(spec)]
        once, _ = filter_frontal(recs)
        assert filter_frontal(once)[0] == once
        chf, _ = filter_chf(recs, {"I50.9"})
        assert filter_chf(chf, {"I50.9"})[0] == chf


class TestAttachLabels:
    def test_one_report_two_images(self):
        recs = [rec("p", "i1", study="s", report="r"), rec("p", "i2", study="s", report="r")]
        out = attach_report_labels(recs, {"r": 2})
        assert [r.label for r in out] == [2, 2]

    def test_empty_map(self):
        recs = [rec("p", "i1"), rec("p", "i2", label=1)]
        assert attach_report_labels(recs, {}) == recs

    def test_report_to_image_scale(self):
        # 3,028 labelled reports, 326 of them with a second frontal image
        recs = []
        for j in range(3_028):
            for k in range(2 if j < 326 else 1):
                recs.append(rec(f"p{j % 1266}", f"i{j}-{k}", study=f"s{j}", report=f"r{j}"))
        labels = {f"r{j}": j % 4 for j in range(3_028)}
        out = attach_report_labels(recs, labels)
        assert sum(r.label is not None for r in out) == 3_354
        assert 3_354 / 3_028 == pytest.approx(1.108, abs=1e-3)

    def test_only_label_changes(self):
        recs = [rec("p", "i1", codes=["I50.9"], day=3)]
        out = attach_report_labels(recs, {recs[0].report_id: 3})
        for f in fields(StudyRecord):
            if f.name != "label":
                assert getattr(out[0], f.name) == getattr(recs[0], f.name)


class TestCohortStats:
    def test_three_exams(self):
        recs = [rec("p", "a", day=0), rec("p", "c", day=8), rec("p", "b", day=1)]
        s = cohort_stats(recs)
        assert s.intervals_per_patient["p"] == [1.0, 7.0]
        assert s.interval_summary["median"] == 4.0
        assert s.frac_within_1_day == 0.5 and s.frac_within_30_days == 1.0

    def test_single_exam(self):
        s = cohort_stats([rec("p", "a")])
        assert s.images_per_patient == {1: 1}
        assert s.interval_summary["n"] == 0 and s.frac_within_1_day is None

    def test_tie_ordering_by_image_id(self):
        recs = [rec("p", "b", day=0), rec("p", "a", day=0), rec("p", "c", day=2)]
        assert cohort_stats(recs).intervals_per_patient["p"] == [0.0, 2.0]

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 6), st.floats(0, 500)), min_size=1, max_size=40))
    def test_counts_consistent(self, spec):
        recs = [rec(f"p{p}", f"i{j}", day=d) for j, (p, d) in enumerate(spec)]
        s = cohort_stats(recs)
        per = Counter(r.patient_id for r in recs)
        assert sum(s.images_per_patient.values()) == len(per)
        for pid, n in per.items():
            assert len(s.intervals_per_patient[pid]) == n - 1
        if s.frac_within_1_day is not None:
            assert 0 <= s.frac_within_1_day <= s.frac_within_30_days <= 1


def patients(n, images=1):
    return [rec(f"p{p:04d}", f"p{p:04d}i{j}") for p in range(n) for j in range(images)]


class TestGroupKFold:
    def test_one_patient_per_fold(self):
        fa = group_kfold(patients(5), 5, seed=0)
        assert sorted(fa.fold_patients()) == [1] * 5

    def test_table_fold_sizes(self):
        fa = group_kfold(patients(1266), 5, seed=7)
        assert fa.fold_patients() == [254, 253, 253, 253, 253]

    def test_ten_patients_three_images(self):
        recs = patients(10, images=3)
        fa = group_kfold(recs, 5, seed=3)
        assert fa.fold_patients() == [2] * 5
        assert sorted(Counter(fa.assignment.values()).values()) == [6] * 5

    def test_too_few_patients(self):
        with pytest.raises(ValueError):
            group_kfold(patients(3), 5, seed=0)

    def test_k_must_be_two_or_more(self):
        with pytest.raises(ValueError):
            group_kfold(patients(3), 1, seed=0)

    def test_deterministic_and_order_free(self):
        recs = patients(40, images=2)
        a = group_kfold(recs, 4, seed=11)
        b = group_kfold(list(reversed(recs)), 4, seed=11)
        assert a.patient_fold == b.patient_fold
        assert a.to_csv(recs) == group_kfold(recs, 4, seed=11).to_csv(recs)

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(7, 60))
    def test_no_patient_in_two_folds(self, seed, k, n):
        recs = patients(n, images=2)
        fa = group_kfold(recs, k, seed)
        folds_of = {}
        for r in recs:
            folds_of.setdefault(r.patient_id, set()).add(fa.assignment[r.image_id])
        assert all(len(f) == 1 for f in folds_of.values())
        sizes = fa.fold_patients()
        assert max(sizes) - min(sizes) <= 1


class TestFoldDistribution:
    def test_unlabeled(self):
        recs = patients(4)
        d = fold_distribution(group_kfold(recs, 2, 0), recs)
        assert d["total"]["counts"] == [0, 0, 0, 0] and d["total"]["total_images"] == 4
        assert d["total"]["percentages"] == [None] * 4

    def test_one_per_severity(self):
        recs = [rec(f"p{c}", f"i{c}", label=c) for c in range(4)]
        d = fold_distribution(group_kfold(recs, 2, 1), recs)
        summed = [sum(f["counts"][c] for f in d["folds"]) for c in range(4)]
        assert summed == [1, 1, 1, 1]

    def test_table_totals(self):
        counts = (1419, 716, 1071, 148)
        labels = [c for c, n in enumerate(counts) for _ in range(n)]
        recs = [rec(f"p{j % 1266:04d}", f"i{j}", label=c) for j, c in enumerate(labels)]
        d = fold_distribution(group_kfold(recs, 5, 0), recs)
        assert d["total"]["total_images"] == 3354
        assert d["total"]["counts"] == list(counts)
        pct = [round(p, 2) for p in d["total"]["percentages"]]
        # 1419 / 3354 rounds to 42.31%, not 42.13%
        assert pct == [42.31, 21.35, 31.93, 4.41]
        assert [f["n_patients"] for f in d["folds"]] == [254, 253, 253, 253, 253]
