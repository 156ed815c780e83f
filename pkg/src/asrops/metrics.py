"""Golden-signal registry (traffic, errors, latency, saturation) and Prometheus text exposition."""

from __future__ import annotations

import math
import re
import threading
from bisect import bisect_left
from dataclasses import dataclass, field

from .errors import DataError, UsageError

BUCKETS = (0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0)
CONTENT_TYPE = "text/plain; version=0.0.4; charset=utf-8"
DEFAULT_ERROR_KINDS = ("routing",)

QUERIES = "asr_queries_total"
ERRORS = "asr_server_errors_total"
LATENCY = "asr_response_latency_seconds"
SATURATION = "asr_saturation_ratio"

_HELP = {
    QUERIES: "Voice queries received.",
    ERRORS: "Queries that failed, by error kind.",
    LATENCY: "Simulated response latency from arrival to device completion (decoding excluded).",
    SATURATION: "Fraction of the run the device spent busy.",
}


@dataclass
class SliRegistry:
    buckets: tuple[float, ...] = BUCKETS
    queries_total: int = 0
    errors_total: dict[str, int] = field(default_factory=lambda: dict.fromkeys(DEFAULT_ERROR_KINDS, 0))
    bucket_counts: list[int] = field(default_factory=list)  # per bucket, not cumulative; last is +Inf
    latency_sum: float = 0.0
    saturation: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if not self.bucket_counts:
            self.bucket_counts = [0] * (len(self.buckets) + 1)

    @property
    def latency_count(self) -> int:
        return sum(self.bucket_counts)

    def cumulative_buckets(self) -> list[int]:
        out, acc = [], 0
        for c in self.bucket_counts:
            acc += c
            out.append(acc)
        return out


def record_query(reg: SliRegistry, latency_s: float | None, error_kind: str | None = None) -> SliRegistry:
    if latency_s is not None and (latency_s < 0 or math.isnan(latency_s)):
        raise UsageError(f"latency must be non-negative, got {latency_s}")
    if error_kind is None and latency_s is None:
        raise UsageError("a successful query needs a latency")
    with reg._lock:
        reg.queries_total += 1
        if error_kind is not None:
            reg.errors_total[error_kind] = reg.errors_total.get(error_kind, 0) + 1
        else:
            # le semantics: an observation equal to a bound lands in that bucket
            reg.bucket_counts[bisect_left(reg.buckets, latency_s)] += 1
            reg.latency_sum += latency_s
    return reg


def set_saturation(reg: SliRegistry, value: float) -> SliRegistry:
    if not 0.0 <= value <= 1.0:
        raise UsageError("saturation must lie in [0, 1]")
    with reg._lock:
        reg.saturation = value
    return reg


def registry_from_report(report, reg: SliRegistry | None = None) -> SliRegistry:
    """Feed a simulation report's recorded latencies, errors and device busy fraction."""
    reg = reg or SliRegistry()
    for ms in report.latencies_ms:
        record_query(reg, ms / 1000.0)
    for kind, n in sorted(report.error_kinds.items()):
        for _ in range(n):
            record_query(reg, None, kind)
    return set_saturation(reg, report.device_utilization)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "+Inf" if x > 0 else "-Inf"
    if math.isnan(x):
        return "NaN"
    return repr(float(x))


def _escape(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\n", "\\n").replace('"', '\\"')


def _header(lines: list[str], name: str, kind: str) -> None:
    lines.append(f"# HELP {name} {_HELP[name]}")
    lines.append(f"# TYPE {name} {kind}")


def expose_text(reg: SliRegistry) -> str:
    with reg._lock:
        lines: list[str] = []
        _header(lines, QUERIES, "counter")
        lines.append(f"{QUERIES} {reg.queries_total}")
        _header(lines, ERRORS, "counter")
        for kind in sorted(reg.errors_total):
            lines.append(f'{ERRORS}{{kind="{_escape(kind)}"}} {reg.errors_total[kind]}')
        _header(lines, LATENCY, "histogram")
        for le, c in zip((*reg.buckets, math.inf), reg.cumulative_buckets()):
            lines.append(f'{LATENCY}_bucket{{le="{_fmt(le)}"}} {c}')
        lines.append(f"{LATENCY}_sum {_fmt(reg.latency_sum)}")
        lines.append(f"{LATENCY}_count {reg.latency_count}")
        _header(lines, SATURATION, "gauge")
        lines.append(f"{SATURATION} {_fmt(reg.saturation)}")
    return "\n".join(lines) + "\n"


_SAMPLE = re.compile(r'^([a-zA-Z_:][a-zA-Z0-9_:]*)(?:\{(.*)\})?\s+(\S+)$')
_LABEL = re.compile(r'([a-zA-Z_][a-zA-Z0-9_]*)="((?:[^"\\]|\\.)*)"')


def _unescape(value: str) -> str:
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), value)


def parse_samples(text: str) -> list[tuple[str, dict[str, str], float]]:
    """Parse exposition text into (name, labels, value) triples, skipping comments."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        m = _SAMPLE.match(line)
        if not m:
            raise DataError(f"line {lineno}: not a metric sample: {line!r}")
        name, raw_labels, value = m.groups()
        labels = {k: _unescape(v) for k, v in _LABEL.findall(raw_labels or "")}
        out.append((name, labels, float(value)))
    return out


def parse_text(text: str) -> SliRegistry:
    """Rebuild a registry from its own exposition output."""
    les, cums = [], []
    reg = SliRegistry(errors_total={})
    for name, labels, value in parse_samples(text):
        if name == QUERIES:
            reg.queries_total = int(value)
        elif name == ERRORS:
            reg.errors_total[labels["kind"]] = int(value)
        elif name == f"{LATENCY}_bucket":
            les.append(float(labels["le"]))
            cums.append(int(value))
        elif name == f"{LATENCY}_sum":
            reg.latency_sum = value
        elif name == SATURATION:
            reg.saturation = value
    if les:
        if les[-1] != math.inf:
            raise DataError("histogram is missing its +Inf bucket")
        reg.buckets = tuple(les[:-1])
        reg.bucket_counts = [c - p for c, p in zip(cums, [0, *cums[:-1]])]
    return reg
