"""Score files: CSV ``image_id,true_label,p0,p1,p2,p3`` with one row per image."""

from __future__ import annotations

import csv
import io
from typing import Iterable, Sequence

from edemakit.metrics.roc import ScoredSample

SCORE_COLUMNS = ("image_id", "true_label", "p0", "p1", "p2", "p3")


def format_scores(samples: Iterable[ScoredSample]) -> str:
    # repr gives the shortest round-tripping float text
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for s in samples:
        w.writerow([s.image_id, int(s.true_label), *(repr(float(p)) for p in s.scores)])
    return out.getvalue()


def parse_scores(text: str) -> list[ScoredSample]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != SCORE_COLUMNS:
        raise ValueError(f"score file header must be {','.join(SCORE_COLUMNS)}")
    samples, seen = [], set()
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(SCORE_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(SCORE_COLUMNS)} fields, got {len(row)}")
        image_id = row[0]
        if image_id in seen:
            raise ValueError(f"line {lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        try:
            label = int(row[1])
            scores = tuple(float(x) for x in row[2:])
        except ValueError:
            raise ValueError(f"line {lineno}: true_label must be an integer and p0-p3 numbers") from None
        try:
            samples.append(ScoredSample(image_id, label, scores))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return samples


def read_scores(path) -> list[ScoredSample]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_scores(fh.read())


def read_score_files(paths: Sequence) -> list[ScoredSample]:
    """Concatenate several score files, e.g. one per fold; image ids must not repeat."""
    merged, seen = [], set()
    for p in paths:
        for s in read_scores(p):
            if s.image_id in seen:
                raise ValueError(f"{p}: image_id {s.image_id!r} already seen in an earlier score file")
            seen.add(s.image_id)
            merged.append(s)
    return merged
