"""Synthetic corpora with known ground truth.

Every generator is a pure function of a :class:`SynthConfig`. Randomness
comes from ``numpy.random.default_rng([seed, stream])`` (PCG64 seeded through
SeedSequence), with a fixed stream number per generator so that changing one
artifact's settings never perturbs another's draws.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Optional, Sequence

import numpy as np

from edemakit.consensus import VoteLog, vote_log_to_json
from edemakit.corpus import StudyRecord
from edemakit.extraction import DEFAULT_RULES
from edemakit.severity import N_LEVELS, Severity

STREAM_REPORTS = 1
STREAM_COHORT = 2
STREAM_FEATURES = 3
STREAM_VOTES = 4

# labelled-image share of each severity in the reference cohort (1419, 716, 1071, 148 of 3354)
DEFAULT_CLASS_MIX = (1419 / 3354, 716 / 3354, 1071 / 3354, 148 / 3354)

CHF_CODES = ("I50.9", "I50.20", "I50.22", "428.0")
OTHER_CODES = ("J18.9", "I10", "E11.9", "R06.02", "J44.1", "N18.3")
RATERS = ("R1", "R2", "R3")
ATTENDING = "A1"
EPOCH = datetime(2150, 1, 1)

# how a keyword is written in prose when the bare pattern would read oddly
_SURFACE = {"kerley": "Kerley B lines"}

_POSITIVE_TEMPLATES = (
    "{Kw} is present.",
    "There is {kw}.",
    "Findings are consistent with {kw}.",
    "Interval development of {kw}.",
    "{Kw} has increased since the prior exam.",
)
_NONE_TEMPLATES = ("{Kw}.", "{Kw} is seen.", "Compared to prior, {kw}.")
_TRAP_TEMPLATES = ("No {kw}.", "There is no {kw}.", "Lungs are free of {kw}.", "Without {kw} today.")
_FILLER = (
    "The heart size is enlarged but stable.",
    "Median sternotomy wires are intact.",
    "Small bilateral pleural effusions.",
    "The mediastinal contours are unchanged.",
    "A right internal jugular line ends in the lower SVC.",
    "Degenerative changes of the thoracic spine.",
    "Bibasilar atelectasis is noted.",
    "No pneumothorax.",
    "Portable AP upright view of the chest.",
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_patients: int = 200
    n_reports: int = 200
    class_mix: tuple = DEFAULT_CLASS_MIX
    keyword_density: float = 0.5
    negation_trap_rate: float = 0.0
    feature_dim: int = 8
    class_separation: float = 1.5
    chf_fraction: float = 0.5
    exam_p_chf: float = 1 / 13.78
    exam_p_other: float = 1 / 5.43
    max_exams: int = 153
    interval_log_mean: float = math.log(7.09)
    interval_log_sd: float = 2.4
    interval_min_days: float = 0.125
    interval_max_days: float = 1545.84
    lateral_rate: float = 0.3
    rater_agreement: float = 0.97
    n_vote_images: int = 141
    max_rounds: int = 3

    def __post_init__(self):
        mix = tuple(float(p) for p in self.class_mix)
        if len(mix) != N_LEVELS or any(p < 0 for p in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("class_mix must be four non-negative proportions summing to 1")
        object.__setattr__(self, "class_mix", mix)
        for name in ("keyword_density", "negation_trap_rate", "chf_fraction", "lateral_rate", "rater_agreement"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        for name in ("exam_p_chf", "exam_p_other"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if min(self.n_patients, self.n_reports, self.n_vote_images, self.max_exams) < 0 or self.max_exams < 1:
            raise ValueError("counts must be non-negative and max_exams >= 1")
        if not 0 < self.interval_min_days <= self.interval_max_days:
            raise ValueError("interval bounds must satisfy 0 < min <= max")


def _rng(cfg: SynthConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def _draw_labels(rng, cfg: SynthConfig, n: int) -> np.ndarray:
    return rng.choice(N_LEVELS, size=n, p=cfg.class_mix)


@dataclass(frozen=True)
class ReportOracle:
    report_id: str
    true_severity: Severity
    planted_rule_ids: tuple
    trap_rule_ids: tuple = ()


def _surface(rule_id: str, pattern: str) -> str:
    return _SURFACE.get(rule_id, pattern)


def _fill(template: str, phrase: str) -> str:
    # eponyms keep their capital mid-sentence
    lower = phrase if phrase.startswith("Kerley") else phrase[:1].lower() + phrase[1:]
    return template.format(Kw=phrase[:1].upper() + phrase[1:], kw=lower)


def _report_text(rng, severity: int, cfg: SynthConfig):
    by_sev = [[(rid, pat) for rid, pat, s in DEFAULT_RULES if s == c] for c in range(N_LEVELS)]
    n_kw = 1 + int(rng.binomial(2, cfg.keyword_density))
    picks = rng.choice(len(by_sev[severity]), size=n_kw, replace=False)
    sentences, planted = [], []
    for i in sorted(int(p) for p in picks):
        rid, pat = by_sev[severity][i]
        templates = _NONE_TEMPLATES if severity == 0 else _POSITIVE_TEMPLATES
        sentences.append(_fill(templates[int(rng.integers(len(templates)))], _surface(rid, pat)))
        planted.append(rid)
    traps = []
    if severity < N_LEVELS - 1 and rng.random() < cfg.negation_trap_rate:
        sev = int(rng.integers(severity + 1, N_LEVELS))
        rid, pat = by_sev[sev][int(rng.integers(len(by_sev[sev])))]
        template = _TRAP_TEMPLATES[int(rng.integers(len(_TRAP_TEMPLATES)))]
        sentences.append(_fill(template, _surface(rid, pat)))
        traps.append(rid)
    n_fill = int(rng.integers(1, 4))
    sentences.extend(_FILLER[int(i)] for i in rng.choice(len(_FILLER), size=n_fill, replace=False))
    order = rng.permutation(len(sentences))
    return " ".join(sentences[int(i)] for i in order), tuple(planted), tuple(traps)


def gen_reports(cfg: SynthConfig, targets: Optional[Sequence[tuple]] = None):
    """Report texts with planted keywords and their oracle.

    ``targets`` is an optional list of ``(report_id, severity)``; by default
    ``cfg.n_reports`` reports are drawn with severities from ``class_mix``.
    Returns ``(jsonl_text, oracle)`` where oracle maps report_id to a
    :class:`ReportOracle`.
    """
    rng = _rng(cfg, STREAM_REPORTS)
    if targets is None:
        labels = _draw_labels(rng, cfg, cfg.n_reports)
        targets = [(f"rep{j:05d}", int(c)) for j, c in enumerate(labels)]
    lines, oracle = [], {}
    for rid, sev in targets:
        text, planted, traps = _report_text(rng, int(sev), cfg)
        lines.append(json.dumps({"report_id": rid, "text": text}))
        oracle[rid] = ReportOracle(rid, Severity(int(sev)), planted, traps)
    return "".join(line + "\n" for line in lines), oracle


def class_conditional_features(rng, labels: Sequence[int], dim: int, separation: float) -> np.ndarray:
    """Unit-covariance Gaussians with class means c * separation along the first axis."""
    labels = np.asarray(labels, dtype=np.int64)
    X = rng.standard_normal((labels.size, dim))
    X[:, 0] += labels * separation
    return X


def gen_features(cfg: SynthConfig, n: int):
    """``n`` labelled feature vectors: (image_ids, X, labels)."""
    rng = _rng(cfg, STREAM_FEATURES)
    labels = _draw_labels(rng, cfg, n)
    X = class_conditional_features(rng, labels, cfg.feature_dim, cfg.class_separation)
    return [f"x{j:06d}" for j in range(n)], X, labels


@dataclass
class Cohort:
    records: list
    feature_ids: list
    features: np.ndarray
    oracle: dict
    report_targets: list = field(default_factory=list)


def _gap_minutes(rng, cfg: SynthConfig) -> int:
    days = float(np.exp(rng.normal(cfg.interval_log_mean, cfg.interval_log_sd)))
    lo, hi = math.ceil(cfg.interval_min_days * 1440), math.floor(cfg.interval_max_days * 1440)
    return min(max(round(days * 1440), lo, 1), hi)


def gen_cohort(cfg: SynthConfig) -> Cohort:
    """Patients, exams and features.

    Each exam is one study with a frontal image and, with ``lateral_rate``,
    a lateral image. CHF patients carry a CHF code on at least one of their
    visits, and frontal images of CHF-coded visits are labelled from
    ``class_mix``; every other image stays unlabelled. Features are drawn for every
    labelled frontal image.
    """
    rng = _rng(cfg, STREAM_COHORT)
    frng = _rng(cfg, STREAM_FEATURES)
    records, oracle, feat_ids, feat_labels, targets = [], {}, [], [], []
    study_no = 0
    for p in range(cfg.n_patients):
        pid = f"p{p:05d}"
        chf = rng.random() < cfg.chf_fraction
        n_exams = min(int(rng.geometric(cfg.exam_p_chf if chf else cfg.exam_p_other)), cfg.max_exams)
        coded = int(rng.integers(n_exams)) if chf else -1
        t = EPOCH + timedelta(minutes=int(rng.integers(0, 365 * 1440)))
        for e in range(n_exams):
            if e:
                t = t + timedelta(minutes=_gap_minutes(rng, cfg))
            study_no += 1
            sid, rid = f"s{study_no:07d}", f"r{study_no:07d}"
            codes = {OTHER_CODES[int(rng.integers(len(OTHER_CODES)))]}
            if chf and (e == coded or rng.random() < 0.5):
                codes.add(CHF_CODES[int(rng.integers(len(CHF_CODES)))])
            label = Severity(int(rng.choice(N_LEVELS, p=cfg.class_mix))) if codes & set(CHF_CODES) else None
            views = ["frontal"] + (["lateral"] if rng.random() < cfg.lateral_rate else [])
            for v in views:
                iid = f"{sid}-{v[0]}"
                records.append(StudyRecord(pid, sid, iid, t, v, frozenset(codes), rid,
                                           label if v == "frontal" else None))
                if v == "frontal" and label is not None:
                    oracle[iid] = label
                    feat_ids.append(iid)
                    feat_labels.append(int(label))
            if label is not None:
                targets.append((rid, int(label)))
    X = class_conditional_features(frng, feat_labels, cfg.feature_dim, cfg.class_separation)
    return Cohort(records, feat_ids, X, oracle, targets)


def _noisy_vote(rng, label: int, agreement: float) -> int:
    if rng.random() < agreement:
        return label
    if label == 0:
        return 1
    if label == N_LEVELS - 1:
        return N_LEVELS - 2
    return label + (1 if rng.random() < 0.5 else -1)


def _has_majority(votes: Sequence[int]) -> bool:
    return max(votes.count(v) for v in set(votes)) >= 3


def gen_votes(cfg: SynthConfig, oracle: Mapping[str, int]) -> list[VoteLog]:
    """Delphi vote logs for the oracle images, in sorted image order.

    Each vote is the oracle label with probability ``rater_agreement`` and an
    adjacent label otherwise. The attending vote and discussion rounds are
    only drawn when the earlier stages leave the image undecided.
    """
    rng = _rng(cfg, STREAM_VOTES)
    logs = []
    for iid in sorted(oracle):
        truth = int(oracle[iid])
        initial = [_noisy_vote(rng, truth, cfg.rater_agreement) for _ in RATERS]
        attending, rounds = None, []
        if len(set(initial)) > 1:
            att = _noisy_vote(rng, truth, cfg.rater_agreement)
            attending = (ATTENDING, att)
            if not _has_majority(initial + [att]):
                for _ in range(cfg.max_rounds):
                    rnd = [_noisy_vote(rng, truth, cfg.rater_agreement) for _ in range(4)]
                    rounds.append(tuple(zip(RATERS + (ATTENDING,), rnd)))
                    if _has_majority(rnd):
                        break
        logs.append(VoteLog(iid, tuple(zip(RATERS, initial)), attending, tuple(rounds)))
    return logs


def format_votes(logs: Sequence[VoteLog]) -> str:
    return "".join(vote_log_to_json(lg) + "\n" for lg in logs)


def format_oracle(oracle: Mapping[str, object]) -> str:
    """Oracle map as CSV ``id,true_severity`` sorted by id."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "true_severity"])
    for key in sorted(oracle):
        v = oracle[key]
        w.writerow([key, int(getattr(v, "true_severity", v))])
    return out.getvalue()


def read_oracle(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "true_severity"} <= set(reader.fieldnames):
            raise ValueError("oracle file needs columns id,true_severity")
        out = {}
        for row in reader:
            try:
                out[row["id"]] = Severity.parse(row["true_severity"])
            except ValueError as exc:
                raise ValueError(f"line {reader.line_num}: {exc}") from None
        return out
