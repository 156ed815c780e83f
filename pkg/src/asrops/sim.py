"""Virtual-time simulation of an inference server with launch threads and one serialized device.

Event semantics
---------------
* Queries enter a FIFO arrival queue at their trace time (``REPLAY``), at seeded
  exponential gaps (``POISSON``), or, under ``SATURATION``, exactly when a launch
  thread is free to take one, so the server never idles for lack of work.
* An idle thread takes the head of the queue and stays bound to that query
  until it completes.
* GRAPH mode: the thread routes the query to the smallest executor that fits,
  waits for that executor if another query holds it, spends ``t_graph_launch_ms``
  launching, then the device runs ``compute_time(z)`` once earlier jobs finish.
* GRAPHLESS mode: the thread waits for the device, then thread and device are
  occupied together for the per-kernel launches plus the unpadded compute.
* Ties are broken by (time, insertion sequence), so runs are reproducible.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DataError, RoutingError, UsageError
from .pool import ExecutorPool, PlanStrategy, plan_pool, route
from .trace import Trace
from .traffic import CostParams, EmpiricalDist, graph_service, graphless_service


class Mode(str, Enum):
    GRAPH = "graph"
    GRAPHLESS = "graphless"


class Arrival(str, Enum):
    REPLAY = "replay"
    SATURATION = "saturation"
    POISSON = "poisson"


@dataclass(frozen=True)
class SimConfig:
    n_threads: int = 3
    mode: Mode = Mode.GRAPH
    arrival: Arrival = Arrival.SATURATION
    rate_qps: float | None = None
    seed: int = 0
    warmup: int = 100

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "arrival", Arrival(self.arrival))
        if self.n_threads < 1:
            raise UsageError("n_threads must be at least 1")
        if self.arrival is Arrival.POISSON and not (self.rate_qps and self.rate_qps > 0):
            raise UsageError("POISSON arrivals need a positive rate_qps")
        if self.warmup < 0:
            raise UsageError("warmup must be non-negative")


@dataclass
class SimReport:
    mode: Mode
    arrivals: int
    completed: int
    errors: int
    latencies_ms: list[float]
    throughput_qps: float
    device_utilization: float
    per_executor_hits: list[int]
    max_queue_depth: int
    realtime_factor: float
    makespan_ms: float
    error_kinds: dict[str, int] = field(default_factory=dict)

    def percentile(self, q: float) -> float:
        if not self.latencies_ms:
            return math.nan
        return float(np.percentile(self.latencies_ms, q))

    @property
    def p50_ms(self) -> float:
        return self.percentile(50)

    @property
    def p99_ms(self) -> float:
        return self.percentile(99)

    @property
    def mean_latency_ms(self) -> float:
        return math.fsum(self.latencies_ms) / len(self.latencies_ms) if self.latencies_ms else math.nan

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "arrivals": self.arrivals,
            "completed": self.completed,
            "errors": self.errors,
            "error_kinds": dict(sorted(self.error_kinds.items())),
            "throughput_qps": self.throughput_qps,
            "device_utilization": self.device_utilization,
            "realtime_factor": self.realtime_factor,
            "makespan_ms": self.makespan_ms,
            "max_queue_depth": self.max_queue_depth,
            "per_executor_hits": self.per_executor_hits,
            "latency_p50_ms": self.p50_ms if self.latencies_ms else None,
            "latency_p99_ms": self.p99_ms if self.latencies_ms else None,
            "latency_mean_ms": self.mean_latency_ms if self.latencies_ms else None,
            "latencies_ms": self.latencies_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _arrival_times(queries: Sequence, cfg: SimConfig) -> list[float] | None:
    if cfg.arrival is Arrival.SATURATION:
        return None
    if cfg.arrival is Arrival.REPLAY:
        t0 = queries[0].timestamp_ms
        return [float(q.timestamp_ms - t0) for q in queries]
    rng = random.Random(cfg.seed)
    t, times = 0.0, []
    for _ in queries:
        times.append(t)
        t += rng.expovariate(cfg.rate_qps) * 1000.0
    return times


class _Server:
    def __init__(self, trace: Trace, pool: ExecutorPool | None, cost: CostParams, cfg: SimConfig):
        self.q = trace.queries
        self.pool = pool
        self.cost = cost
        self.cfg = cfg
        self.now = 0.0
        self._events: list = []
        self._seq = 0

        n = len(self.q)
        self.arrival = [math.nan] * n
        self.completion = [math.nan] * n
        self.executor_of = [-1] * n
        self.idle_threads = cfg.n_threads
        self.queue: deque[int] = deque()
        self.next_unissued = 0  # SATURATION cursor
        n_exec = len(pool) if pool else 0
        self.exec_busy = [False] * n_exec
        self.exec_waiters: list[deque[int]] = [deque() for _ in range(n_exec)]
        self.hits = [0] * n_exec
        self.device_busy = False
        self.device_queue: deque[tuple[int, float]] = deque()
        self.device_time = 0.0
        self.waiting = 0
        self.max_waiting = 0
        self.errors: dict[str, int] = {}

    def _at(self, t: float, fn, *args) -> None:
        heapq.heappush(self._events, (t, self._seq, fn, args))
        self._seq += 1

    def run(self) -> None:
        times = _arrival_times(self.q, self.cfg)
        if times is None:
            self._dispatch()
        else:
            for i, t in enumerate(times):
                self._at(t, self._arrive, i)
        while self._events:
            t, _, fn, args = heapq.heappop(self._events)
            self.now = t
            fn(*args)

    def _mark_arrival(self, i: int) -> None:
        self.arrival[i] = self.now
        self.waiting += 1
        self.max_waiting = max(self.max_waiting, self.waiting)

    def _arrive(self, i: int) -> None:
        self._mark_arrival(i)
        self.queue.append(i)
        self._dispatch()

    def _take(self) -> int | None:
        if self.queue:
            return self.queue.popleft()
        if self.cfg.arrival is Arrival.SATURATION and self.next_unissued < len(self.q):
            i = self.next_unissued
            self.next_unissued += 1
            self._mark_arrival(i)
            return i
        return None

    def _dispatch(self) -> None:
        while self.idle_threads > 0:
            i = self._take()
            if i is None:
                return
            self.idle_threads -= 1
            self._start(i)

    def _start(self, i: int) -> None:
        length = self.q[i].audio_seconds
        if self.cfg.mode is Mode.GRAPHLESS:
            self._submit(i, graphless_service(self.cost, length))
            return
        try:
            e = route(self.pool, length)
        except RoutingError:
            self._fail(i, "routing")
            return
        self.executor_of[i] = e
        self.hits[e] += 1
        if self.exec_busy[e]:
            self.exec_waiters[e].append(i)
        else:
            self._launch(i, e)

    def _fail(self, i: int, kind: str) -> None:
        self.errors[kind] = self.errors.get(kind, 0) + 1
        self.waiting -= 1
        self.idle_threads += 1

    def _launch(self, i: int, e: int) -> None:
        self.exec_busy[e] = True
        thread_ms, device_ms = graph_service(self.cost, self.pool.lengths[e])
        self._at(self.now + thread_ms, self._submit, i, device_ms)

    def _submit(self, i: int, device_ms: float) -> None:
        self.device_queue.append((i, device_ms))
        if not self.device_busy:
            self._device_next()

    def _device_next(self) -> None:
        if not self.device_queue:
            return
        i, dur = self.device_queue.popleft()
        self.device_busy = True
        self.device_time += dur
        self.waiting -= 1
        self._at(self.now + dur, self._device_done, i)

    def _device_done(self, i: int) -> None:
        self.device_busy = False
        self.completion[i] = self.now
        e = self.executor_of[i]
        if e >= 0:
            if self.exec_waiters[e]:
                self._launch(self.exec_waiters[e].popleft(), e)
            else:
                self.exec_busy[e] = False
        self._device_next()
        self.idle_threads += 1
        self._dispatch()


def run_sim(trace: Trace, pool: ExecutorPool | None, cost: CostParams, cfg: SimConfig) -> SimReport:
    if len(trace) == 0:
        raise DataError("cannot simulate an empty trace")
    if cfg.mode is Mode.GRAPH and pool is None:
        raise UsageError("GRAPH mode needs an executor pool")
    if cfg.warmup >= len(trace):
        raise UsageError(f"warmup ({cfg.warmup}) must be smaller than the trace ({len(trace)})")

    srv = _Server(trace, pool if cfg.mode is Mode.GRAPH else None, cost, cfg)
    srv.run()

    done = [i for i in range(len(trace)) if not math.isnan(srv.completion[i])]
    first = min(srv.arrival[i] for i in range(len(trace)) if not math.isnan(srv.arrival[i]))
    last = max((srv.completion[i] for i in done), default=first)
    makespan = last - first
    latencies = [srv.completion[i] - srv.arrival[i] for i in done if i >= cfg.warmup]
    audio = math.fsum(trace.queries[i].audio_seconds for i in done)
    n_err = sum(srv.errors.values())

    return SimReport(
        mode=cfg.mode,
        arrivals=len(trace),
        completed=len(done),
        errors=n_err,
        latencies_ms=latencies,
        throughput_qps=1000.0 * len(done) / makespan if makespan > 0 else 0.0,
        device_utilization=min(1.0, srv.device_time / makespan) if makespan > 0 else 0.0,
        per_executor_hits=srv.hits,
        max_queue_depth=srv.max_waiting,
        realtime_factor=1000.0 * audio / makespan if makespan > 0 else 0.0,
        makespan_ms=makespan,
        error_kinds=dict(srv.errors),
    )


@dataclass(frozen=True)
class SweepRow:
    x: int
    p50_ms: float
    p99_ms: float
    mean_ms: float
    throughput_qps: float
    utilization: float


def _row(x: int, rep: SimReport) -> SweepRow:
    return SweepRow(x, rep.p50_ms, rep.p99_ms, rep.mean_latency_ms, rep.throughput_qps,
                    rep.device_utilization)


def sweep_graphs(trace: Trace, cost: CostParams, cfg: SimConfig, n_values: Sequence[int],
                 strategy: PlanStrategy | str = PlanStrategy.LOGNORMAL_QUANTILE,
                 budget_mb: float = math.inf) -> list[SweepRow]:
    """Re-plan a pool for each size in ``n_values`` and simulate it in GRAPH mode."""
    dist = EmpiricalDist.from_queries(trace.queries)
    cfg = replace(cfg, mode=Mode.GRAPH)
    rows = []
    for n in n_values:
        pool = plan_pool(dist, n, strategy, cost, budget_mb)
        rows.append(_row(n, run_sim(trace, pool, cost, cfg)))
    return rows


def sweep_threads(trace: Trace, pool: ExecutorPool, cost: CostParams, cfg: SimConfig,
                  k_values: Sequence[int]) -> list[SweepRow]:
    return [_row(k, run_sim(trace, pool, cost, replace(cfg, n_threads=k))) for k in k_values]


def compare_modes(trace: Trace, pool: ExecutorPool, cost: CostParams,
                  cfg: SimConfig) -> tuple[float, float]:
    """(median-latency speedup, throughput gain) of GRAPH over GRAPHLESS."""
    if len(trace) == 0:
        raise DataError("cannot compare modes on an empty trace")
    graph = run_sim(trace, pool, cost, replace(cfg, mode=Mode.GRAPH))
    plain = run_sim(trace, pool, cost, replace(cfg, mode=Mode.GRAPHLESS))
    return plain.p50_ms / graph.p50_ms, graph.throughput_qps / plain.throughput_qps


SWEEP_HEADER = ("x", "p50_ms", "p99_ms", "throughput_qps", "utilization")


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r.x, repr(r.p50_ms), repr(r.p99_ms), repr(r.throughput_qps), repr(r.utilization)])
    return buf.getvalue()
