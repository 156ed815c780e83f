"""Query traces: data model, JSONL I/O, session grouping and a synthetic generator."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

from .errors import DataError, UsageError

MAX_AUDIO_SECONDS = 10.0
SESSION_GAP_MS = 60_000


@dataclass(frozen=True)
class Query:
    id: str
    device_id: str
    timestamp_ms: int
    audio_seconds: float
    transcript: str
    confidence: float
    gold_transcript: str | None = None
    gold_correct: bool | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class Session:
    device_id: str
    queries: tuple[Query, ...]

    def __len__(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class Trace:
    queries: tuple[Query, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.queries, key=lambda q: (q.timestamp_ms, q.id)))
        object.__setattr__(self, "queries", ordered)
        seen = set()
        for q in ordered:
            if q.id in seen:
                raise DataError(f"duplicate query id {q.id!r}")
            seen.add(q.id)

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


_QUERY_FIELDS = {f.name for f in fields(Query)}
_REQUIRED = ("id", "device_id", "timestamp_ms", "audio_seconds", "transcript", "confidence")


def validate_query(q: Query, where: str = "") -> None:
    prefix = f"{where}: " if where else ""
    if not q.audio_seconds > 0:
        raise DataError(f"{prefix}audio length must be positive, got {q.audio_seconds}")
    if q.audio_seconds > MAX_AUDIO_SECONDS:
        raise DataError(f"{prefix}audio length exceeds 10 s bound ({q.audio_seconds})")
    if q.timestamp_ms < 0:
        raise DataError(f"{prefix}negative timestamp {q.timestamp_ms}")


def query_from_dict(rec: dict, where: str = "") -> Query:
    prefix = f"{where}: " if where else ""
    if not isinstance(rec, dict):
        raise DataError(f"{prefix}expected a JSON object")
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise DataError(f"{prefix}missing field(s) {', '.join(missing)}")
    unknown = set(rec) - _QUERY_FIELDS
    if unknown:
        raise DataError(f"{prefix}unknown field(s) {', '.join(sorted(unknown))}")
    try:
        ts = rec["timestamp_ms"]
        if isinstance(ts, bool) or not isinstance(ts, int):
            raise TypeError("timestamp_ms must be an integer")
        gold = rec.get("gold_transcript")
        gold_ok = rec.get("gold_correct")
        if gold_ok is not None and not isinstance(gold_ok, bool):
            raise TypeError("gold_correct must be a boolean")
        q = Query(
            id=str(rec["id"]),
            device_id=str(rec["device_id"]),
            timestamp_ms=ts,
            audio_seconds=float(rec["audio_seconds"]),
            transcript=str(rec["transcript"]).lower(),
            confidence=float(rec["confidence"]),
            gold_transcript=None if gold is None else str(gold).lower(),
            gold_correct=gold_ok,
        )
    except (TypeError, ValueError) as exc:
        raise DataError(f"{prefix}{exc}") from None
    validate_query(q, where)
    return q


def load_trace(path: str | Path) -> Trace:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            queries.append(query_from_dict(rec, f"line {lineno}"))
    return Trace(tuple(queries))


def dump_trace(trace: Trace | Iterable[Query]) -> str:
    return "".join(json.dumps(q.to_dict(), ensure_ascii=False) + "\n" for q in trace)


def save_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(dump_trace(trace), encoding="utf-8")


def group_sessions(trace: Trace, gap_ms: int = SESSION_GAP_MS) -> list[Session]:
    """Chain each device's queries into maximal runs whose consecutive gaps are <= gap_ms.

    Sessions come back ordered by the timestamp of their first query.
    """
    by_device: dict[str, list[Query]] = {}
    for q in trace.queries:
        by_device.setdefault(q.device_id, []).append(q)

    sessions = []
    for device_id, qs in by_device.items():
        run = [qs[0]]
        for prev, cur in zip(qs, qs[1:]):
            if cur.timestamp_ms - prev.timestamp_ms <= gap_ms:
                run.append(cur)
            else:
                sessions.append(Session(device_id, tuple(run)))
                run = [cur]
        sessions.append(Session(device_id, tuple(run)))
    sessions.sort(key=lambda s: (s.queries[0].timestamp_ms, s.queries[0].id))
    return sessions


DEFAULT_VOCABULARY = (
    "netflix", "hulu", "youtube", "espn", "free movies for me", "watch fox news",
    "cnn", "hbo max", "xfinity home", "turn on closed captions", "go back",
    "show me comedies", "recordings", "channel guide", "disney plus",
    "weather", "nbc", "paramount plus", "peacock", "volume up",
)


@dataclass
class GenConfig:
    n_devices: int = 200
    sessions_per_device: int = 25
    mistranscription_prob: float = 0.25
    repeat_prob_after_error: float = 0.8
    repeat_delay_seconds: tuple[float, float] = (2.0, 10.0)
    session_gap_seconds: tuple[float, float] = (90.0, 3600.0)
    length_lognormal: tuple[float, float] = (-0.22, 0.35)
    long_query_prob: float = 0.14
    long_query_seconds: tuple[float, float] = (7.0, 10.0)
    confidence_correct: tuple[float, float] = (0.80, 0.10)
    confidence_incorrect: tuple[float, float] = (0.55, 0.12)
    vocabulary: list[str] = field(default_factory=lambda: list(DEFAULT_VOCABULARY))
    start_ms: int = 1_656_806_400_000
    seed: int = 0
    max_queries: int | None = None  # keep only the earliest queries

    def validate(self) -> None:
        if self.n_devices < 1 or self.sessions_per_device < 1:
            raise UsageError("n_devices and sessions_per_device must be positive")
        for name in ("mistranscription_prob", "repeat_prob_after_error", "long_query_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {p}")
        for name in ("repeat_delay_seconds", "session_gap_seconds"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise UsageError(f"{name} must be an ordered non-negative range")
        lo, hi = self.session_gap_seconds
        if lo * 1000 <= SESSION_GAP_MS:
            raise UsageError("session_gap_seconds must start above the 60 s session window")
        lo, hi = self.long_query_seconds
        if not 0 < lo <= hi <= MAX_AUDIO_SECONDS:
            raise UsageError("long_query_seconds must be an ordered range inside (0, 10]")
        if self.length_lognormal[1] < 0:
            raise UsageError("length_lognormal sigma must be non-negative")
        for name in ("confidence_correct", "confidence_incorrect"):
            if getattr(self, name)[1] < 0:
                raise UsageError(f"{name} stddev must be non-negative")
        if not self.vocabulary:
            raise UsageError("vocabulary must be non-empty")
        if self.max_queries is not None and self.max_queries < 1:
            raise UsageError("max_queries must be positive")
        if self.start_ms < 0:
            raise UsageError("start_ms must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> GenConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown GenConfig key(s): {', '.join(sorted(unknown))}")
        kw = dict(data)
        for key in ("repeat_delay_seconds", "session_gap_seconds", "length_lognormal", "long_query_seconds",
                    "confidence_correct", "confidence_incorrect"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _draw_length(rng: random.Random, cfg: GenConfig) -> float:
    # short commands are log-normal; a minority of long utterances sits on top
    if cfg.long_query_prob and rng.random() < cfg.long_query_prob:
        x = rng.uniform(*cfg.long_query_seconds)
    else:
        x = rng.lognormvariate(*cfg.length_lognormal)
    return round(min(max(x, 0.05), MAX_AUDIO_SECONDS), 3)


def generate_trace(cfg: GenConfig) -> Trace:
    """Simulate devices issuing commands; a mistranscription may trigger a quick repeat.

    A session ends when the weak transcript is right or the user gives up.
    """
    cfg.validate()
    rng = random.Random(cfg.seed)
    vocab = [v.lower() for v in cfg.vocabulary]
    # head-heavy command popularity
    weights = [1.0 / (rank + 1) for rank in range(len(vocab))]

    raw = []  # (timestamp_ms, device_id, seq, fields)
    for d in range(cfg.n_devices):
        device_id = f"dev{d:05d}"
        t_ms = cfg.start_ms + int(rng.uniform(0, 3_600_000))
        seq = 0
        for _ in range(cfg.sessions_per_device):
            gold = rng.choices(vocab, weights)[0]
            while True:
                wrong = len(vocab) > 1 and rng.random() < cfg.mistranscription_prob
                if wrong:
                    transcript = rng.choice([v for v in vocab if v != gold])
                    mean, sd = cfg.confidence_incorrect
                else:
                    transcript = gold
                    mean, sd = cfg.confidence_correct
                conf = round(rng.gauss(mean, sd), 4)
                raw.append((t_ms, device_id, seq, dict(
                    device_id=device_id, timestamp_ms=t_ms,
                    audio_seconds=_draw_length(rng, cfg),
                    transcript=transcript, confidence=conf,
                    gold_transcript=gold, gold_correct=not wrong,
                )))
                seq += 1
                if wrong and rng.random() < cfg.repeat_prob_after_error:
                    t_ms += int(round(1000 * rng.uniform(*cfg.repeat_delay_seconds)))
                    continue
                break
            t_ms += int(round(1000 * rng.uniform(*cfg.session_gap_seconds)))

    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    if cfg.max_queries is not None:
        raw = raw[:cfg.max_queries]
    width = max(6, len(str(len(raw))))
    queries = tuple(Query(id=f"q{i:0{width}d}", **rec) for i, (_, _, _, rec) in enumerate(raw))
    return Trace(queries)


def weak_label_error_rate(queries: Iterable[Query]) -> float | None:
    flags = [q.gold_correct for q in queries]
    if not flags or any(f is None for f in flags):
        return None
    return sum(1 for f in flags if not f) / len(flags)
