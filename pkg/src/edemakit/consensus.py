"""Modified Delphi consensus over recorded rater votes, and Fleiss' kappa.

Stages, in order:

1. three residents vote independently; a unanimous vote is the label;
2. otherwise an attending's vote is added and a label with at least three of
   the four votes wins;
3. otherwise up to ``max_rounds`` rounds of discussion followed by a fresh
   anonymous four-rater vote, each decided by the same three-of-four rule;
4. anything still undecided is labelled "no consensus".
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from edemakit.severity import N_LEVELS, Severity

UNANIMOUS3 = "unanimous3"
MAJORITY4 = "majority4"
NO_CONSENSUS = "no_consensus"
DEFAULT_MAX_ROUNDS = 3


class VoteLogError(ValueError):
    pass


@dataclass(frozen=True)
class VoteLog:
    image_id: str
    initial_votes: tuple
    attending_vote: Optional[tuple] = None
    discussion_rounds: tuple = field(default_factory=tuple)

    def __post_init__(self):
        votes = tuple((str(r), Severity.parse(v)) for r, v in self.initial_votes)
        if len(votes) != 3:
            raise VoteLogError(f"{self.image_id}: expected 3 initial votes, got {len(votes)}")
        _check_distinct(self.image_id, "initial", votes)
        object.__setattr__(self, "initial_votes", votes)
        if self.attending_vote is not None:
            r, v = self.attending_vote
            object.__setattr__(self, "attending_vote", (str(r), Severity.parse(v)))
        rounds = []
        for k, rnd in enumerate(self.discussion_rounds, 1):
            rv = tuple((str(r), Severity.parse(v)) for r, v in rnd)
            _check_distinct(self.image_id, f"round {k}", rv)
            rounds.append(rv)
        object.__setattr__(self, "discussion_rounds", tuple(rounds))


def _check_distinct(image_id, stage, votes):
    raters = [r for r, _ in votes]
    if len(set(raters)) != len(raters):
        raise VoteLogError(f"{image_id}: repeated rater id in {stage} votes")


@dataclass(frozen=True)
class ConsensusOutcome:
    label: Optional[Severity]
    path: str
    rounds_used: int

    @property
    def path_name(self) -> str:
        return f"discussion_round({self.rounds_used})" if self.path == "discussion_round" else self.path


def _majority(labels: Sequence[int], needed: int) -> Optional[Severity]:
    label, count = Counter(labels).most_common(1)[0]
    return Severity(label) if count >= needed else None


def reduce_consensus(log: VoteLog, max_rounds: int = DEFAULT_MAX_ROUNDS) -> ConsensusOutcome:
    """Replay the Delphi stages on one image's votes.

    Only the stages that are reached are read. Raises VoteLogError when a
    reached stage has no votes recorded or a round does not hold four votes.
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be >= 0")
    initial = [v for _, v in log.initial_votes]
    if len(set(initial)) == 1:
        return ConsensusOutcome(Severity(initial[0]), UNANIMOUS3, 0)
    if log.attending_vote is None:
        raise VoteLogError(f"{log.image_id}: residents disagree but no attending vote is recorded")
    winner = _majority(initial + [log.attending_vote[1]], 3)
    if winner is not None:
        return ConsensusOutcome(winner, MAJORITY4, 0)
    for k in range(1, max_rounds + 1):
        if k > len(log.discussion_rounds):
            raise VoteLogError(f"{log.image_id}: discussion round {k} reached but not recorded")
        rnd = log.discussion_rounds[k - 1]
        if len(rnd) != 4:
            raise VoteLogError(f"{log.image_id}: round {k} has {len(rnd)} votes, expected 4")
        winner = _majority([v for _, v in rnd], 3)
        if winner is not None:
            return ConsensusOutcome(winner, "discussion_round", k)
    return ConsensusOutcome(None, NO_CONSENSUS, max_rounds)


def fleiss_kappa(votes, n_categories: int = N_LEVELS) -> float:
    """Fleiss' kappa for an items x raters matrix of category labels.

    When every vote falls in one category the chance agreement is 1 and
    agreement is trivially perfect; that case returns 1.0.
    """
    v = np.asarray(votes)
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
        raise ValueError("votes must be an items x raters matrix with >= 1 item and >= 2 raters")
    if v.min() < 0 or v.max() >= n_categories:
        raise ValueError(f"categories must lie in 0..{n_categories - 1}")
    n_items, r = v.shape
    counts = np.zeros((n_items, n_categories))
    for c in range(n_categories):
        counts[:, c] = (v == c).sum(axis=1)
    p_items = ((counts * (counts - 1)).sum(axis=1)) / (r * (r - 1))
    p_bar = float(p_items.mean())
    p_cat = counts.sum(axis=0) / (n_items * r)
    pe = float((p_cat**2).sum())
    if pe >= 1.0:
        if p_bar >= 1.0:
            return 1.0
        raise ZeroDivisionError("chance agreement is 1 but observed agreement is not")
    return (p_bar - pe) / (1.0 - pe)


def initial_vote_matrix(logs: Sequence[VoteLog]) -> np.ndarray:
    """Residents' initial votes as items x raters, raters sorted by id within each item."""
    return np.array([[int(v) for _, v in sorted(log.initial_votes)] for log in logs], dtype=np.int64)


def _pairs(obj, where):
    try:
        return [(str(r), int(v)) for r, v in obj]
    except (TypeError, ValueError):
        raise VoteLogError(f"{where}: votes must be [rater, label] pairs") from None


def parse_vote_line(line: str, lineno: int) -> VoteLog:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise VoteLogError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    where = f"line {lineno}"
    if not isinstance(obj, dict) or "image_id" not in obj or "initial" not in obj:
        raise VoteLogError(f"{where}: needs image_id and initial")
    attending = obj.get("attending")
    if attending is not None:
        attending = _pairs([attending], where)[0]
    rounds = [_pairs(rnd, where) for rnd in obj.get("rounds") or []]
    try:
        return VoteLog(str(obj["image_id"]), tuple(_pairs(obj["initial"], where)), attending, tuple(rounds))
    except ValueError as exc:
        raise VoteLogError(f"{where}: {exc}") from None


def read_vote_logs(path) -> list[VoteLog]:
    logs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                logs.append(parse_vote_line(line, lineno))
    return logs


def vote_log_to_json(log: VoteLog) -> str:
    obj = {"image_id": log.image_id, "initial": [[r, int(v)] for r, v in log.initial_votes]}
    if log.attending_vote is not None:
        obj["attending"] = [log.attending_vote[0], int(log.attending_vote[1])]
    if log.discussion_rounds:
        obj["rounds"] = [[[r, int(v)] for r, v in rnd] for rnd in log.discussion_rounds]
    return json.dumps(obj, separators=(",", ":"))


def format_outcomes_csv(logs: Sequence[VoteLog], outcomes: Sequence[ConsensusOutcome]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["image_id", "label", "path", "rounds_used"])
    for log, o in zip(logs, outcomes):
        w.writerow([log.image_id, "" if o.label is None else int(o.label), o.path_name, o.rounds_used])
    return out.getvalue()
