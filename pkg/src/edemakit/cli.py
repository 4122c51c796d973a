"""Command-line entry point: ``edemakit <subcommand> ...``.

Exit status is 0 on success, 1 when inputs fail validation and 2 on a
numerical failure. Failures print one JSON object on a single stderr line.
Every subcommand writes only inside its ``--out`` directory, and output
bytes depend only on the inputs and ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from edemakit import __version__
from edemakit.baseline import (
    WEIGHT_MODES,
    TrainConfig,
    format_features,
    model_to_json,
    predict_scores,
    read_features,
    scored_samples,
    train,
)
from edemakit.consensus import (
    DEFAULT_MAX_ROUNDS,
    fleiss_kappa,
    format_outcomes_csv,
    initial_vote_matrix,
    read_vote_logs,
    reduce_consensus,
)
from edemakit.corpus import (
    DEFAULT_CHF_CODES,
    MANIFEST_COLUMNS,
    attach_report_labels,
    cohort_stats,
    filter_chf,
    filter_frontal,
    fold_distribution,
    format_distribution_csv,
    format_manifest,
    group_kfold,
    load_manifest,
    read_folds,
)
from edemakit.extraction import (
    compile_ruleset,
    extract,
    format_validation_csv,
    load_ruleset,
    read_reports,
    validate_extraction,
)
from edemakit.metrics import SignificanceConfig, evaluation_report
from edemakit.metrics.scorefile import SCORE_COLUMNS, format_scores, read_scores
from edemakit.synth import (
    SynthConfig,
    format_oracle,
    format_votes,
    gen_cohort,
    gen_reports,
    gen_votes,
    read_oracle,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

SCHEMAS = {
    "manifest": {
        "kind": "csv",
        "columns": list(MANIFEST_COLUMNS),
        "notes": "acquisition_time ISO-8601; view frontal|lateral|other; dx_codes ';'-separated; label empty or 0-3",
    },
    "folds": {"kind": "csv", "columns": ["image_id", "fold"], "notes": "fold is 0-based"},
    "reports": {"kind": "jsonl", "fields": {"report_id": "string", "text": "string"}},
    "ruleset": {
        "kind": "json",
        "fields": {
            "rules": "list of {rule_id, pattern, severity 0-3}",
            "negation_cues": "optional list of phrases",
            "negation_window": "optional integer >= 1 (word tokens)",
        },
    },
    "labels": {"kind": "csv", "columns": ["report_id", "label", "needs_review", "fired_rules"],
               "notes": "label empty when no rule fired; fired_rules ';'-separated"},
    "validation": {"kind": "csv",
                   "columns": ["edema_severity", "keyword", "n_reports", "precision", "sensitivity", "specificity"]},
    "votes": {
        "kind": "jsonl",
        "fields": {
            "image_id": "string",
            "initial": "[[rater, label]] x 3",
            "attending": "optional [rater, label]",
            "rounds": "optional list of [[rater, label]] x 4",
        },
    },
    "outcomes": {"kind": "csv", "columns": ["image_id", "label", "path", "rounds_used"]},
    "features": {"kind": "csv", "columns": ["image_id", "f0", "...", "f{d-1}"]},
    "model": {"kind": "json", "fields": {"W": "4 x d", "b": "4", "d": "int", "config": "training settings",
                                         "class_weights": "4", "final_loss": "float"}},
    "scores": {"kind": "csv", "columns": list(SCORE_COLUMNS)},
    "roc": {"kind": "csv", "columns": ["comparison", "fpr", "tpr"]},
    "oracle": {"kind": "csv", "columns": ["id", "true_severity"]},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


class Output:
    """Writes files under one directory and records what was written."""

    def __init__(self, root):
        self.root = Path(root)
        self.written = []

    def write(self, name: str, text: str):
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.written.append(name)

    def json(self, name: str, obj):
        self.write(name, _dump_json(obj))


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _csv_text(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def cmd_synth(args, out: Output):
    cfg = SynthConfig(
        seed=args.seed,
        n_patients=args.n_patients,
        negation_trap_rate=args.negation_trap_rate,
        keyword_density=args.keyword_density,
        class_separation=args.class_separation,
        feature_dim=args.feature_dim,
        rater_agreement=args.rater_agreement,
        n_vote_images=args.n_vote_images,
        max_rounds=args.max_rounds,
    )
    cohort = gen_cohort(cfg)
    out.write("manifest.csv", format_manifest(cohort.records))
    out.write("features.csv", format_features(cohort.feature_ids, cohort.features))
    out.write("cohort_oracle.csv", format_oracle(cohort.oracle))
    reports, report_oracle = gen_reports(cfg, targets=cohort.report_targets)
    out.write("reports.jsonl", reports)
    out.write("report_oracle.csv", format_oracle(report_oracle))
    vote_ids = sorted(cohort.oracle)[: cfg.n_vote_images]
    vote_oracle = {i: cohort.oracle[i] for i in vote_ids}
    out.write("votes.jsonl", format_votes(gen_votes(cfg, vote_oracle)))
    out.write("vote_oracle.csv", format_oracle(vote_oracle))
    out.json("synth_config.json", asdict(cfg))


def cmd_extract(args, out: Output):
    _require_files(args.reports, args.ruleset, args.reference)
    rules = load_ruleset(args.ruleset) if args.ruleset else compile_ruleset()
    reports = read_reports(args.reports)
    results = {rid: extract(text, rules) for rid, text in reports}
    rows = []
    for rid, _ in reports:
        r = results[rid]
        rows.append([rid, "" if r.label is None else int(r.label), int(r.needs_review), ";".join(sorted(r.fired_rules()))])
    out.write("labels.csv", _csv_text(SCHEMAS["labels"]["columns"], rows))
    summary = {
        "n_reports": len(reports),
        "n_labeled": sum(r.label is not None for r in results.values()),
        "n_needs_review": sum(r.needs_review for r in results.values()),
        "label_counts": [sum(r.label == c for r in results.values()) for c in range(4)],
        "n_rules": len(rules.rules),
    }
    if args.reference:
        reference = read_oracle(args.reference)
        validation = validate_extraction(results, reference, rules)
        out.write("validation.csv", format_validation_csv(validation))
        summary["overall_precision"] = validation.overall_precision
    out.json("extraction.json", summary)


def _read_report_labels(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"report_id", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: needs columns report_id,label")
        labels = {}
        for row in reader:
            if row["label"].strip():
                try:
                    labels[row["report_id"]] = int(row["label"])
                except ValueError:
                    raise ValueError(f"{path} line {reader.line_num}: label must be an integer") from None
        return labels


def cmd_cohort(args, out: Output):
    _require_files(args.manifest, args.report_labels)
    records = load_manifest(args.manifest)
    if args.report_labels:
        records = attach_report_labels(records, _read_report_labels(args.report_labels))
    codes = frozenset(c.strip() for c in args.chf_codes.split(",") if c.strip()) if args.chf_codes else DEFAULT_CHF_CODES
    frontal, n_excluded = filter_frontal(records)
    chf, other = filter_chf(frontal, codes)
    out.write("cohort.csv", format_manifest(chf))
    out.json("cohort.json", {
        "n_records": len(records),
        "n_non_frontal_excluded": n_excluded,
        "n_frontal": len(frontal),
        "n_chf_images": len(chf),
        "n_non_chf_images": len(other),
        "n_labeled_chf_images": sum(r.label is not None for r in chf),
        "chf": cohort_stats(chf).to_dict(),
        "non_chf": cohort_stats(other).to_dict(),
    })


def cmd_split(args, out: Output):
    _require_files(args.manifest)
    records = load_manifest(args.manifest)
    folds = group_kfold(records, args.k, args.seed)
    dist = fold_distribution(folds, records)
    out.write("folds.csv", folds.to_csv(records))
    out.write("distribution.csv", format_distribution_csv(dist))
    out.json("distribution.json", dist)


def _parse_weights(text):
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValueError("--explicit-weights must be four comma-separated numbers") from None


def cmd_train(args, out: Output):
    _require_files(args.manifest, args.features, args.folds)
    records = load_manifest(args.manifest)
    ids, X = read_features(args.features)
    folds = read_folds(args.folds)
    labels = {r.image_id: int(r.label) for r in records if r.label is not None}
    row_of = {iid: j for j, iid in enumerate(ids)}
    usable = [iid for iid in ids if iid in labels]
    if not usable:
        raise ValueError("no feature rows have a manifest label")
    missing = [iid for iid in usable if iid not in folds]
    if missing:
        raise ValueError(f"{len(missing)} labelled image(s) have no fold, e.g. {missing[0]!r}")
    batch = "full" if args.batch == "full" else _positive_int(args.batch, "--batch")
    config = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch=batch,
        seed=args.seed,
        weight_mode=args.weight_mode,
        explicit_weights=_parse_weights(args.explicit_weights),
        l2=args.l2,
    )
    fold_ids = sorted({folds[i] for i in usable})
    summary = []
    for f in fold_ids:
        train_ids = [i for i in usable if folds[i] != f]
        test_ids = [i for i in usable if folds[i] == f]
        if not train_ids:
            raise ValueError(f"fold {f}: no training images left")
        tr = np.array([row_of[i] for i in train_ids])
        te = np.array([row_of[i] for i in test_ids])
        result = train(X[tr], np.array([labels[i] for i in train_ids]), config)
        probs = predict_scores(result.params, X[te])
        out.write(f"model_fold{f}.json", model_to_json(result, config))
        out.write(f"scores_fold{f}.csv", format_scores(scored_samples(test_ids, [labels[i] for i in test_ids], probs)))
        summary.append({"fold": f, "n_train": len(train_ids), "n_test": len(test_ids),
                        "final_loss": result.loss_trace[-1], "class_weights": list(result.weights)})
    out.json("train.json", {"config": asdict(config), "folds": summary})


def _positive_int(text, flag):
    try:
        v = int(text)
    except ValueError:
        raise ValueError(f"{flag} must be 'full' or a positive integer") from None
    if v < 1:
        raise ValueError(f"{flag} must be 'full' or a positive integer")
    return v


def cmd_evaluate(args, out: Output):
    _require_files(*args.a, *args.b)
    groups_a = [read_scores(p) for p in args.a]
    groups_b = [read_scores(p) for p in args.b]
    samples_a = [s for g in groups_a for s in g]
    samples_b = [s for g in groups_b for s in g]
    per_fold = len(args.a) > 1 and len(args.a) == len(args.b)
    significance = SignificanceConfig(alpha=args.alpha, m=args.m_comparisons)
    report, curves = evaluation_report(
        samples_a, samples_b, significance,
        fold_groups_a=groups_a if per_fold else None,
        fold_groups_b=groups_b if per_fold else None,
        mode=args.score_mode,
    )
    out.json("report.json", report)
    for model in ("a", "b"):
        rows = []
        for (key, name), roc in sorted(curves.items()):
            if key == model:
                rows.extend([name, repr(float(x)), repr(float(y))] for x, y in zip(roc.fpr, roc.tpr))
        out.write(f"roc_{model}.csv", _csv_text(SCHEMAS["roc"]["columns"], rows))


def cmd_consensus(args, out: Output):
    _require_files(args.votes)
    logs = read_vote_logs(args.votes)
    if not logs:
        raise ValueError("vote log is empty")
    outcomes = [reduce_consensus(lg, args.max_rounds) for lg in logs]
    out.write("outcomes.csv", format_outcomes_csv(logs, outcomes))
    paths = {}
    for o in outcomes:
        paths[o.path_name] = paths.get(o.path_name, 0) + 1
    out.json("consensus.json", {
        "n_images": len(logs),
        "max_rounds": args.max_rounds,
        "paths": paths,
        "labels": [sum(o.label == c for o in outcomes) for c in range(4)],
        "n_no_consensus": sum(o.label is None for o in outcomes),
        "fleiss_kappa_initial": fleiss_kappa(initial_vote_matrix(logs)),
    })


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edemakit", description="Pulmonary edema severity labelling and evaluation toolkit.")
    p.add_argument("--version", action="version", version=f"edemakit {__version__}")
    p.add_argument("--schema", nargs="?", const="all", metavar="FORMAT",
                   help="print the file format specifications (or one of them) and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--out", required=True, help="output directory; nothing is written elsewhere")
        sp.set_defaults(func=func)
        return sp

    s = command("synth", cmd_synth, "generate a synthetic cohort, reports, features and vote logs")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n-patients", type=int, default=200)
    s.add_argument("--negation-trap-rate", type=float, default=0.0)
    s.add_argument("--keyword-density", type=float, default=0.5)
    s.add_argument("--class-separation", type=float, default=1.5)
    s.add_argument("--feature-dim", type=int, default=8)
    s.add_argument("--rater-agreement", type=float, default=0.97)
    s.add_argument("--n-vote-images", type=int, default=141)
    s.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)

    s = command("extract", cmd_extract, "label reports with keyword rules")
    s.add_argument("--reports", required=True)
    s.add_argument("--ruleset", help="rule configuration JSON (default: the 16 built-in keywords)")
    s.add_argument("--reference", help="oracle CSV id,true_severity for keyword validation")

    s = command("cohort", cmd_cohort, "keep frontal CHF images and summarize exam patterns")
    s.add_argument("--manifest", required=True)
    s.add_argument("--report-labels", help="labels.csv from extract to attach to images")
    s.add_argument("--chf-codes", help="comma-separated diagnosis codes defining the CHF cohort")

    s = command("split", cmd_split, "assign patients to folds")
    s.add_argument("--manifest", required=True)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int, required=True)

    s = command("train", cmd_train, "train the baseline per fold and score the held-out fold")
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--folds", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--weight-mode", choices=WEIGHT_MODES, default="inverse_frequency")
    s.add_argument("--explicit-weights", help="four comma-separated weights for --weight-mode explicit")
    s.add_argument("--learning-rate", type=float, default=0.5)
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--batch", default="full")
    s.add_argument("--l2", type=float, default=0.0)

    s = command("evaluate", cmd_evaluate, "compare two models' score files over the nine comparisons")
    s.add_argument("--a", nargs="+", required=True, help="model A score file(s), one per fold")
    s.add_argument("--b", nargs="+", required=True, help="model B score file(s), one per fold")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--m-comparisons", type=int, default=9)
    s.add_argument("--score-mode", choices=("ratio", "expected"), default="ratio")

    s = command("consensus", cmd_consensus, "reduce Delphi vote logs to consensus labels")
    s.add_argument("--votes", required=True)
    s.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
    return p


def _diagnose(kind: str, err: BaseException, command) -> None:
    print(json.dumps({"error": kind, "type": type(err).__name__, "command": command, "message": str(err)},
                     sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        if args.schema:
            if args.schema != "all" and args.schema not in SCHEMAS:
                raise UsageError(f"unknown format {args.schema!r}; known: {', '.join(sorted(SCHEMAS))}")
            print(_dump_json(SCHEMAS if args.schema == "all" else SCHEMAS[args.schema]), end="")
            return EXIT_OK
        if command is None:
            raise UsageError("a subcommand is required")
        out = Output(args.out)
        args.func(args, out)
    except UsageError as err:
        _diagnose("usage", err, command)
        return EXIT_INVALID
    except (ArithmeticError, FloatingPointError) as err:
        _diagnose("numerical", err, command)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError) as err:
        _diagnose("invalid_input", err, command)
        return EXIT_INVALID
    print(json.dumps({"command": command, "status": "ok", "written": sorted(out.written)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
