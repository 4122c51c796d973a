"""Keyword rules with negation detection for labelling radiology reports.

Each rule is a case-insensitive keyword phrase tagged with a severity.
Positive findings (severity 1-3) preceded by a negation cue within a short
token window of the same sentence are suppressed; the none-class rules are
themselves negative statements and are never suppressed.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from edemakit.metrics.agreement import prf_counts
from edemakit.severity import SEVERITY_NAMES, Severity

DEFAULT_RULES = (
    ("no_pulmonary_edema", "No pulmonary edema", 0),
    ("no_vascular_congestion", "No vascular congestion", 0),
    ("no_fluid_overload", "No fluid overload", 0),
    ("no_acute_cardiopulmonary_process", "No acute cardiopulmonary process", 0),
    ("cephalization", "Cephalization", 1),
    ("mild_pulmonary_vascular_congestion", "Mild pulmonary vascular congestion", 1),
    ("mild_hilar_engorgement", "Mild hilar engorgement", 1),
    ("mild_vascular_plethora", "Mild vascular plethora", 1),
    ("interstitial_opacities", "Interstitial opacities", 2),
    ("kerley", "Kerley", 2),
    ("interstitial_edema", "Interstitial edema", 2),
    ("interstitial_thickening", "Interstitial thickening", 2),
    ("alveolar_infiltrates", "Alveolar infiltrates", 3),
    ("severe_pulmonary_edema", "Severe pulmonary edema", 3),
    ("perihilar_infiltrates", "Perihilar infiltrates", 3),
    ("hilar_infiltrates", "hilar infiltrates", 3),
)
DEFAULT_NEGATION_CUES = ("no", "without", "not", "free of", "resolution of", "clearing of", "negative for")
DEFAULT_NEGATION_WINDOW = 5

_SENTENCE_BREAK = re.compile(r"[.;\n]")
_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


class RuleConfigError(ValueError):
    pass


def _phrase_regex(phrase: str) -> re.Pattern:
    words = phrase.split()
    if not words:
        raise RuleConfigError("pattern must not be empty")
    body = r"\s+".join(re.escape(w) for w in words)
    return re.compile(rf"(?<![\w-]){body}(?![\w-])", re.IGNORECASE)


@dataclass(frozen=True)
class ExtractionRule:
    rule_id: str
    pattern: str
    severity: Severity
    regex: re.Pattern = field(compare=False, repr=False)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    negation_cues: tuple
    negation_window: int

    def by_id(self) -> dict:
        return {r.rule_id: r for r in self.rules}


def compile_ruleset(config=None) -> RuleSet:
    """Compile a rule configuration; ``None`` gives the 16 default keyword rules.

    ``config`` is either a list of ``{rule_id, pattern, severity}`` objects or
    a mapping with ``rules`` and optional ``negation_cues`` / ``negation_window``.
    """
    if config is None:
        config = {"rules": [{"rule_id": i, "pattern": p, "severity": s} for i, p, s in DEFAULT_RULES]}
    if isinstance(config, (list, tuple)):
        config = {"rules": list(config)}
    if not isinstance(config, Mapping) or "rules" not in config:
        raise RuleConfigError("rule configuration needs a 'rules' list")
    cues = tuple(config.get("negation_cues", DEFAULT_NEGATION_CUES))
    window = config.get("negation_window", DEFAULT_NEGATION_WINDOW)
    if isinstance(window, bool) or not isinstance(window, int) or window < 1:
        raise RuleConfigError(f"negation_window must be an integer >= 1, got {window!r}")
    for cue in cues:
        if not isinstance(cue, str) or not _TOKEN.findall(cue.lower()):
            raise RuleConfigError(f"negation cue {cue!r} has no word tokens")
    rules = []
    seen = set()
    for i, entry in enumerate(config["rules"]):
        try:
            rule_id, pattern, severity = entry["rule_id"], entry["pattern"], entry["severity"]
        except (KeyError, TypeError):
            raise RuleConfigError(f"rule #{i} needs rule_id, pattern and severity") from None
        if not isinstance(rule_id, str) or not rule_id:
            raise RuleConfigError(f"rule #{i}: rule_id must be a non-empty string")
        if rule_id in seen:
            raise RuleConfigError(f"duplicate rule_id {rule_id!r}")
        seen.add(rule_id)
        if not isinstance(pattern, str) or not pattern.strip():
            raise RuleConfigError(f"rule {rule_id!r}: empty pattern")
        try:
            sev = Severity.parse(severity)
        except ValueError as exc:
            raise RuleConfigError(f"rule {rule_id!r}: {exc}") from None
        rules.append(ExtractionRule(rule_id, pattern, sev, _phrase_regex(pattern)))
    return RuleSet(rules=tuple(rules), negation_cues=cues, negation_window=window)


def load_ruleset(path) -> RuleSet:
    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RuleConfigError(f"rule configuration is not valid JSON: {exc}") from None
    return compile_ruleset(config)


@dataclass(frozen=True)
class Match:
    rule_id: str
    severity: Severity
    start: int
    end: int
    negated: bool
    cue: Optional[str] = None

    @property
    def effective(self) -> bool:
        return not self.negated


@dataclass(frozen=True)
class ExtractionResult:
    matches: tuple
    label: Optional[Severity]

    @property
    def needs_review(self) -> bool:
        """A positive keyword was suppressed by negation and nothing else labelled the report."""
        return self.label is None and any(m.negated for m in self.matches)

    def fired_rules(self) -> set:
        return {m.rule_id for m in self.matches if m.effective}


def _sentence_start(text: str, pos: int) -> int:
    start = 0
    for m in _SENTENCE_BREAK.finditer(text, 0, pos):
        start = m.end()
    return start


def _find_cue(tokens: Sequence[str], cues: Sequence[tuple], window: int) -> Optional[str]:
    tail = list(tokens[-window:]) if window else []
    for cue in cues:
        n = len(cue)
        for i in range(len(tail) - n + 1):
            if tuple(tail[i:i + n]) == cue:
                return " ".join(cue)
    return None


def extract(report_text: str, ruleset: RuleSet) -> ExtractionResult:
    """Find every rule occurrence, mark negated positives, and resolve the report label."""
    cues = [tuple(_TOKEN.findall(c.lower())) for c in ruleset.negation_cues]
    matches = []
    for rule in ruleset.rules:
        for m in rule.regex.finditer(report_text):
            negated, cue = False, None
            if rule.severity > Severity.NONE:
                before = report_text[_sentence_start(report_text, m.start()):m.start()]
                cue = _find_cue(_TOKEN.findall(before.lower()), cues, ruleset.negation_window)
                negated = cue is not None
            matches.append(Match(rule.rule_id, rule.severity, m.start(), m.end(), negated, cue))
    matches.sort(key=lambda x: (x.start, x.end, x.rule_id))
    return ExtractionResult(tuple(matches), resolve_severity(matches))


def resolve_severity(matches: Iterable[Match]) -> Optional[Severity]:
    """Highest non-negated positive severity; 0 if only none-class phrases; else None."""
    effective = [m for m in matches if m.effective]
    if not effective:
        return None
    return max(m.severity for m in effective)


@dataclass(frozen=True)
class KeywordStats:
    rule_id: str
    pattern: str
    severity: Severity
    n_reports: int
    precision: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]


@dataclass(frozen=True)
class KeywordValidation:
    keywords: tuple
    overall_precision: Optional[float]
    n_reports: int
    n_labeled: int
    category_precision: dict


def validate_extraction(
    extracted: Mapping[str, ExtractionResult],
    reference: Mapping[str, int],
    ruleset: RuleSet,
) -> KeywordValidation:
    """Per-keyword report counts, precision, sensitivity and specificity against reference labels.

    A keyword "fires" on a report when it has at least one non-negated match.
    Overall precision is the share of reports with an extracted label whose
    label equals the reference.
    """
    missing = [rid for rid in extracted if rid not in reference]
    if missing:
        raise ValueError(f"{len(missing)} extracted report(s) lack a reference label, e.g. {missing[0]!r}")
    ids = sorted(extracted)
    ref = {rid: Severity.parse(reference[rid]) for rid in ids}
    fired = {rid: extracted[rid].fired_rules() for rid in ids}
    keywords = []
    for rule in ruleset.rules:
        tp = fp = tn = fn = 0
        for rid in ids:
            hit = rule.rule_id in fired[rid]
            same = ref[rid] == rule.severity
            if hit and same:
                tp += 1
            elif hit:
                fp += 1
            elif same:
                fn += 1
            else:
                tn += 1
        rates = prf_counts(tp, fp, tn, fn)
        keywords.append(KeywordStats(rule.rule_id, rule.pattern, rule.severity, tp + fp,
                                     rates.precision, rates.sensitivity, rates.specificity))
    labeled = [rid for rid in ids if extracted[rid].label is not None]
    correct = sum(extracted[rid].label == ref[rid] for rid in labeled)
    per_cat = {}
    for sev in Severity:
        got = [rid for rid in labeled if extracted[rid].label == sev]
        per_cat[int(sev)] = (sum(ref[rid] == sev for rid in got) / len(got)) if got else None
    return KeywordValidation(
        keywords=tuple(keywords),
        overall_precision=(correct / len(labeled)) if labeled else None,
        n_reports=len(ids),
        n_labeled=len(labeled),
        category_precision=per_cat,
    )


def _pct(x: Optional[float]) -> str:
    return "" if x is None else f"{100 * x:.2f}%"


def format_validation_csv(v: KeywordValidation) -> str:
    """Keyword validation table: severity, keyword, report count, precision, sensitivity, specificity."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["edema_severity", "keyword", "n_reports", "precision", "sensitivity", "specificity"])
    w.writerow(["Overall", "N/A", v.n_reports, _pct(v.overall_precision), "N/A", "N/A"])
    for k in v.keywords:
        w.writerow([SEVERITY_NAMES[k.severity], k.pattern, k.n_reports,
                    _pct(k.precision), _pct(k.sensitivity), _pct(k.specificity)])
    return out.getvalue()


def read_reports(path) -> list[tuple[str, str]]:
    """(report_id, text) pairs from a JSONL file, in file order."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid, text = obj["report_id"], obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ValueError(f"line {lineno}: expected {{\"report_id\": ..., \"text\": ...}}") from None
            rid = str(rid)
            if rid in seen:
                raise ValueError(f"line {lineno}: duplicate report_id {rid!r}")
            if not isinstance(text, str):
                raise ValueError(f"line {lineno}: text must be a string")
            seen.add(rid)
            out.append((rid, text))
    return out
