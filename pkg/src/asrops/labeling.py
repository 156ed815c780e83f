"""Labeling functions over query traces and the verdict matrix they produce."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable

from .errors import UsageError
from .trace import SESSION_GAP_MS, Query, Session, Trace, group_sessions

RAPID_REPEAT_MS = 13_000
DEFAULT_MIN_COUNT = 5
LF_NAMES = ("lf_sp", "lf_ac", "lf_rr")


class Verdict(IntEnum):
    # values double as vote encodings for the label model
    INCORRECT = -1
    ABSTAIN = 0
    CORRECT = 1


@dataclass(frozen=True)
class PercentileStats:
    p20: float
    p80: float
    count: int


ConfidenceTable = dict[str, PercentileStats]


@dataclass(frozen=True)
class LabelMatrix:
    query_ids: tuple[str, ...]
    lf_names: tuple[str, ...]
    verdicts: tuple[tuple[Verdict, ...], ...]

    def __post_init__(self):
        if len(self.verdicts) != len(self.query_ids):
            raise UsageError("verdict rows do not match query ids")
        for row in self.verdicts:
            if len(row) != len(self.lf_names):
                raise UsageError("verdict row width does not match lf_names")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.query_ids), len(self.lf_names)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query_id", *self.lf_names])
        for qid, row in zip(self.query_ids, self.verdicts):
            w.writerow([qid, *(v.name for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> LabelMatrix:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        return cls(
            tuple(r[0] for r in body),
            tuple(header[1:]),
            tuple(tuple(Verdict[v] for v in r[1:]) for r in body),
        )


def nearest_rank(sorted_values: list[float], p: float) -> float:
    """Value at 1-based rank ceil(p * n) of an ascending sample."""
    n = len(sorted_values)
    # round away float noise such as 0.2 * 10 = 2.0000000000000004
    rank = max(1, math.ceil(round(p * n, 9)))
    return sorted_values[rank - 1]


def build_confidence_table(trace: Trace | Iterable[Query],
                           min_count: int = DEFAULT_MIN_COUNT) -> ConfidenceTable:
    if min_count < 1:
        raise UsageError("min_count must be at least 1")
    groups: dict[str, list[float]] = {}
    for q in trace:
        groups.setdefault(q.transcript, []).append(q.confidence)
    table = {}
    for text, scores in groups.items():
        if len(scores) < min_count:
            continue
        scores.sort()
        table[text] = PercentileStats(nearest_rank(scores, 0.2), nearest_rank(scores, 0.8), len(scores))
    return table


def lf_session_position(q: Query, s: Session) -> Verdict:
    try:
        pos = s.queries.index(q)
    except ValueError:
        raise UsageError(f"query {q.id} is not in the given session") from None
    if pos == len(s.queries) - 1:
        return Verdict.CORRECT
    if len(s.queries) >= 3:
        return Verdict.INCORRECT
    return Verdict.ABSTAIN


def lf_asr_confidence(q: Query, table: ConfidenceTable) -> Verdict:
    stats = table.get(q.transcript)
    if stats is None:
        return Verdict.ABSTAIN
    if q.confidence >= stats.p80:
        return Verdict.CORRECT
    if q.confidence <= stats.p20:
        return Verdict.INCORRECT
    return Verdict.ABSTAIN


def lf_rapid_repetition(q: Query, next_same_device: Query | None,
                        threshold_ms: int = RAPID_REPEAT_MS) -> Verdict:
    if next_same_device is None:
        return Verdict.ABSTAIN
    if next_same_device.device_id != q.device_id:
        raise UsageError("next query comes from a different device")
    if next_same_device.timestamp_ms - q.timestamp_ms <= threshold_ms:
        return Verdict.INCORRECT
    return Verdict.ABSTAIN


def apply_lfs(trace: Trace, table: ConfidenceTable, *,
              session_gap_ms: int = SESSION_GAP_MS,
              repeat_ms: int = RAPID_REPEAT_MS) -> LabelMatrix:
    session_of: dict[str, Session] = {}
    for s in group_sessions(trace, session_gap_ms):
        for q in s.queries:
            session_of[q.id] = s

    next_of: dict[str, Query | None] = {}
    last_by_device: dict[str, Query] = {}
    for q in trace.queries:
        prev = last_by_device.get(q.device_id)
        if prev is not None:
            next_of[prev.id] = q
        last_by_device[q.device_id] = q

    rows = []
    for q in trace.queries:
        rows.append((
            lf_session_position(q, session_of[q.id]),
            lf_asr_confidence(q, table),
            lf_rapid_repetition(q, next_of.get(q.id), repeat_ms),
        ))
    return LabelMatrix(tuple(q.id for q in trace.queries), LF_NAMES, tuple(rows))
