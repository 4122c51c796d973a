import json
import subprocess
import sys
from pathlib import Path

import pytest

from edemakit.cli import SCHEMAS, main


def run(*argv):
    return main([str(a) for a in argv])


def diagnostic(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def pipeline(root: Path, seed: int = 7, n_patients: int = 60) -> Path:
    s, x, sp, a, b, ev = (root / d for d in ("synth", "extract", "split", "train_a", "train_b", "eval"))
    assert run("synth", "--seed", seed, "--n-patients", n_patients, "--negation-trap-rate", 0.2, "--out", s) == 0
    assert run("extract", "--reports", s / "reports.jsonl", "--reference", s / "report_oracle.csv", "--out", x) == 0
    assert run("split", "--manifest", s / "manifest.csv", "--k", 5, "--seed", seed, "--out", sp) == 0
    common = ["--manifest", s / "manifest.csv", "--features", s / "features.csv", "--folds", sp / "folds.csv",
              "--seed", seed, "--epochs", 50]
    assert run("train", *common, "--out", a) == 0
    assert run("train", *common, "--weight-mode", "uniform", "--batch", 16, "--out", b) == 0
    folds_a = sorted(a.glob("scores_fold*.csv"))
    folds_b = sorted(b.glob("scores_fold*.csv"))
    assert run("evaluate", "--a", *folds_a, "--b", *folds_b, "--out", ev) == 0
    return root


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--seed", 1, "--n-patients", 80, "--out", out) == 0
    return out


class TestSubcommands:
    def test_synth_outputs(self, synth_dir):
        names = {p.name for p in synth_dir.iterdir()}
        assert {"manifest.csv", "features.csv", "reports.jsonl", "votes.jsonl", "report_oracle.csv",
                "cohort_oracle.csv", "vote_oracle.csv", "synth_config.json"} <= names

    def test_extract_validation_table(self, synth_dir, tmp_path):
        assert run("extract", "--reports", synth_dir / "reports.jsonl", "--reference",
                   synth_dir / "report_oracle.csv", "--out", tmp_path) == 0
        lines = (tmp_path / "validation.csv").read_text().splitlines()
        assert lines[1].startswith("Overall,N/A,") and lines[1].endswith(",100.00%,N/A,N/A")
        assert len(lines) == 18

    def test_cohort(self, synth_dir, tmp_path):
        assert run("cohort", "--manifest", synth_dir / "manifest.csv", "--out", tmp_path) == 0
        stats = json.loads((tmp_path / "cohort.json").read_text())
        assert stats["n_frontal"] + stats["n_non_frontal_excluded"] == stats["n_records"]
        assert stats["n_chf_images"] + stats["n_non_chf_images"] == stats["n_frontal"]

    def test_split_table_fold_sizes(self, tmp_path):
        s = tmp_path / "s"
        assert run("synth", "--seed", 2, "--n-patients", 1266, "--n-vote-images", 0, "--out", s) == 0
        assert run("split", "--manifest", s / "manifest.csv", "--k", 5, "--seed", 2, "--out", tmp_path / "f") == 0
        dist = json.loads((tmp_path / "f" / "distribution.json").read_text())
        assert [f["n_patients"] for f in dist["folds"]] == [254, 253, 253, 253, 253]
        assert (tmp_path / "f" / "distribution.csv").read_text().splitlines()[1].startswith("Fold 1,254,")

    def test_identical_score_files(self, tmp_path):
        pipeline(tmp_path / "p")
        scores = sorted((tmp_path / "p" / "train_a").glob("scores_fold*.csv"))
        assert run("evaluate", "--a", *scores, "--b", *scores, "--out", tmp_path / "e") == 0
        report = json.loads((tmp_path / "e" / "report.json").read_text())
        assert len(report["comparisons"]) == 9
        assert all(row["p"] == 1.0 for row in report["comparisons"])
        assert report["kappa_quadratic"]["a"] == report["kappa_quadratic"]["b"]
        assert set(report["confusion_matrix"]) == {"a", "b"}
        assert "folds" in report
        roc = (tmp_path / "e" / "roc_a.csv").read_text().splitlines()
        assert roc[0] == "comparison,fpr,tpr"

    def test_consensus(self, synth_dir, tmp_path):
        assert run("consensus", "--votes", synth_dir / "votes.jsonl", "--max-rounds", 2, "--out", tmp_path) == 0
        summary = json.loads((tmp_path / "consensus.json").read_text())
        assert summary["n_images"] == 141 and 0.85 <= summary["fleiss_kappa_initial"] <= 1.0
        assert (tmp_path / "outcomes.csv").read_text().startswith("image_id,label,path,rounds_used\n")


class TestDeterminism:
    def test_pipeline_byte_identical(self, tmp_path):
        a = tree_bytes(pipeline(tmp_path / "run1"))
        b = tree_bytes(pipeline(tmp_path / "run2"))
        assert a.keys() == b.keys() and a == b

    def test_writes_only_under_out(self, tmp_path, synth_dir):
        before = set(tmp_path.rglob("*"))
        out = tmp_path / "only"
        assert run("consensus", "--votes", synth_dir / "votes.jsonl", "--out", out) == 0
        assert {p for p in tmp_path.rglob("*")} - before == {out, out / "outcomes.csv", out / "consensus.json"}


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert run("plot") == 1
        assert diagnostic(capsys)["error"] == "usage"

    def test_missing_file(self, tmp_path, capsys):
        assert run("split", "--manifest", tmp_path / "nope.csv", "--seed", 1, "--out", tmp_path / "o") == 1
        d = diagnostic(capsys)
        assert d["error"] == "invalid_input" and "nope.csv" in d["message"]
        assert not (tmp_path / "o").exists()

    def test_schema_violation_names_line(self, tmp_path, capsys):
        m = tmp_path / "m.csv"
        m.write_text("patient_id,study_id,image_id,acquisition_time,view,dx_codes,report_id,label\n"
                     "p1,s1,i1,2150-01-01T00:00,sideways,,r1,\n")
        assert run("split", "--manifest", m, "--seed", 1, "--out", tmp_path / "o") == 1
        assert "line 2" in diagnostic(capsys)["message"]

    def test_seed_required(self, tmp_path, capsys):
        assert run("synth", "--out", tmp_path) == 1
        assert "--seed" in diagnostic(capsys)["message"]

    def test_numerical_exit_code(self, synth_dir, tmp_path, capsys):
        assert run("split", "--manifest", synth_dir / "manifest.csv", "--seed", 1, "--out", tmp_path / "f") == 0
        capsys.readouterr()
        code = run("train", "--manifest", synth_dir / "manifest.csv", "--features", synth_dir / "features.csv",
                   "--folds", tmp_path / "f" / "folds.csv", "--seed", 1, "--learning-rate", 1e308,
                   "--epochs", 5, "--out", tmp_path / "t")
        assert code == 2
        assert diagnostic(capsys)["error"] == "numerical"

    def test_bad_votes(self, tmp_path, capsys):
        v = tmp_path / "v.jsonl"
        v.write_text('{"image_id": "a", "initial": [["R1", 1], ["R2", 2], ["R3", 3]]}\n')
        assert run("consensus", "--votes", v, "--out", tmp_path / "o") == 1
        assert "attending" in diagnostic(capsys)["message"]


class TestSchema:
    def test_all(self, capsys):
        assert run("--schema") == 0
        assert set(json.loads(capsys.readouterr().out)) == set(SCHEMAS)

    def test_one(self, capsys):
        assert run("--schema", "scores") == 0
        assert json.loads(capsys.readouterr().out)["columns"] == ["image_id", "true_label", "p0", "p1", "p2", "p3"]

    def test_unknown(self, capsys):
        assert run("--schema", "pdf") == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "edemakit.cli", "--schema", "oracle"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["columns"] == ["id", "true_severity"]
