import math

import pytest

from asrops.errors import DataError, UsageError
from asrops.pool import ExecutorPool, PlanStrategy, plan_pool
from asrops.sim import (SWEEP_HEADER, Arrival, Mode, SimConfig, compare_modes, run_sim, sweep_graphs,
                        sweep_threads, sweep_to_csv)
from asrops.trace import GenConfig, Query, Trace, generate_trace
from asrops.traffic import CostParams, EmpiricalDist, compute_time, graphless_service


def trace_of(lengths, gap_ms=0):
    return Trace(tuple(Query(f"q{i:04d}", f"d{i % 7}", i * gap_ms, l, "x", 0.5) for i, l in enumerate(lengths)))


@pytest.fixture(scope="module")
def small_trace():
    return generate_trace(GenConfig(n_devices=40, sessions_per_device=12, seed=6, max_queries=600))


def cfg(**kw):
    return SimConfig(**{"warmup": 0, **kw})


class TestSingleQuery:
    def test_graph_latency(self, example_cost):
        rep = run_sim(trace_of([2.0]), ExecutorPool((10.0,)), example_cost, cfg())
        assert rep.latencies_ms == [pytest.approx(37.05)]
        assert rep.per_executor_hits == [1]

    def test_graphless_latency(self, example_cost):
        rep = run_sim(trace_of([2.0]), None, example_cost, cfg(mode=Mode.GRAPHLESS))
        assert rep.latencies_ms == [pytest.approx(14.2)]


class TestSaturation:
    def test_single_executor_throughput(self, example_cost):
        rep = run_sim(trace_of([2.0] * 2000), ExecutorPool((10.0,)), example_cost, cfg(warmup=100))
        # the lone executor is relaunched after every job, so each cycle is launch + compute
        assert rep.throughput_qps == pytest.approx(1000 / 37.05, rel=1e-4)
        assert round(rep.throughput_qps, 1) == 27.0
        assert rep.device_utilization == pytest.approx(37.0 / 37.05, rel=1e-4)

    def test_throughput_bounds(self, small_trace, default_cost):
        for n in (1, 3, 8, 36):
            pool = plan_pool(EmpiricalDist.from_queries(small_trace.queries), n, PlanStrategy.UNIFORM)
            rep = run_sim(small_trace, pool, default_cost, cfg())
            hi = 1000 / min(compute_time(default_cost, z) for z in pool.lengths)
            lo = 1000 / (default_cost.t_graph_launch_ms + compute_time(default_cost, 10.0))
            assert lo <= rep.throughput_qps <= hi

    def test_two_threads_beat_one(self, small_trace, default_cost):
        pool = plan_pool(EmpiricalDist.from_queries(small_trace.queries), 8, PlanStrategy.UNIFORM)
        one = run_sim(small_trace, pool, default_cost, cfg(n_threads=1))
        two = run_sim(small_trace, pool, default_cost, cfg(n_threads=2))
        assert two.throughput_qps >= one.throughput_qps


class TestInvariants:
    def test_conservation_with_routing_errors(self, example_cost):
        t = trace_of([1.0, 7.0, 2.0, 9.0, 3.0])
        rep = run_sim(t, ExecutorPool((5.0,)), example_cost, cfg())
        assert rep.errors == 2 and rep.error_kinds == {"routing": 2}
        assert rep.arrivals == rep.completed + rep.errors
        assert sum(rep.per_executor_hits) == rep.completed

    @pytest.mark.parametrize("arrival", list(Arrival))
    def test_causality(self, small_trace, default_cost, arrival):
        pool = plan_pool(EmpiricalDist.from_queries(small_trace.queries), 8, PlanStrategy.TIME_WEIGHTED)
        rep = run_sim(small_trace, pool, default_cost, cfg(arrival=arrival, rate_qps=50.0))
        fastest = default_cost.t_graph_launch_ms + compute_time(default_cost, pool.lengths[0])
        assert min(rep.latencies_ms) >= fastest - 1e-9
        assert rep.arrivals == rep.completed + rep.errors
        assert 0 <= rep.device_utilization <= 1 and rep.throughput_qps > 0

    def test_deterministic(self, small_trace, default_cost):
        pool = plan_pool(EmpiricalDist.from_queries(small_trace.queries), 8)
        c = cfg(arrival=Arrival.POISSON, rate_qps=120.0, seed=4)
        assert run_sim(small_trace, pool, default_cost, c).to_json() == \
            run_sim(small_trace, pool, default_cost, c).to_json()

    def test_graphless_ignores_pool(self, small_trace, default_cost):
        c = cfg(mode=Mode.GRAPHLESS)
        a = run_sim(small_trace, ExecutorPool((10.0,)), default_cost, c)
        b = run_sim(small_trace, ExecutorPool((1.0, 2.0, 10.0)), default_cost, c)
        assert a.latencies_ms == b.latencies_ms

    def test_replay_idle_system(self, example_cost):
        # arrivals far apart never queue
        rep = run_sim(trace_of([1.0, 2.0, 3.0], gap_ms=10_000), None, example_cost,
                      cfg(mode=Mode.GRAPHLESS, arrival=Arrival.REPLAY))
        assert rep.latencies_ms == pytest.approx([graphless_service(example_cost, l) for l in (1, 2, 3)])
        # depth counts the query being dispatched, so an uncontended system peaks at 1
        assert rep.max_queue_depth == 1

    def test_warmup_excluded(self, small_trace, default_cost):
        pool = ExecutorPool((10.0,))
        rep = run_sim(small_trace, pool, default_cost, SimConfig(warmup=100))
        assert len(rep.latencies_ms) == len(small_trace) - 100


class TestErrors:
    def test_empty_trace(self, example_cost):
        with pytest.raises(DataError):
            run_sim(Trace(), ExecutorPool((10.0,)), example_cost, cfg())
        with pytest.raises(DataError):
            compare_modes(Trace(), ExecutorPool((10.0,)), example_cost, cfg())

    def test_graph_needs_pool(self, example_cost):
        with pytest.raises(UsageError):
            run_sim(trace_of([1.0]), None, example_cost, cfg())

    def test_config_validation(self):
        with pytest.raises(UsageError):
            SimConfig(n_threads=0)
        with pytest.raises(UsageError):
            SimConfig(arrival=Arrival.POISSON)
        with pytest.raises(UsageError):
            run_sim(trace_of([1.0]), ExecutorPool((10.0,)), CostParams(), SimConfig(warmup=1))


class TestSweeps:
    def test_graph_sweep_single_point(self, small_trace, default_cost):
        (row,) = sweep_graphs(small_trace, default_cost, cfg(), [1])
        rep = run_sim(small_trace, ExecutorPool((10.0,)), default_cost, cfg())
        assert row.throughput_qps == rep.throughput_qps and row.p50_ms == rep.p50_ms

    def test_graph_sweep_monotone(self, small_trace, default_cost):
        rows = sweep_graphs(small_trace, default_cost, cfg(), [1, 2, 4, 8])
        assert len(rows) == 4
        t = [r.throughput_qps for r in rows]
        assert all(b >= a for a, b in zip(t, t[1:]))

    def test_thread_sweep(self, small_trace, default_cost):
        pool = plan_pool(EmpiricalDist.from_queries(small_trace.queries), 36, PlanStrategy.LOGNORMAL_QUANTILE)
        rows = sweep_threads(small_trace, pool, default_cost, cfg(), [1, 2, 3])
        assert len(rows) == 3
        one = run_sim(small_trace, pool, default_cost, cfg(n_threads=1))
        assert rows[0].throughput_qps == one.throughput_qps
        t = [r.throughput_qps for r in rows]
        assert all(b >= a for a, b in zip(t, t[1:]))

    def test_csv(self, small_trace, default_cost):
        text = sweep_to_csv(sweep_graphs(small_trace, default_cost, cfg(), [1, 4]))
        lines = text.splitlines()
        assert tuple(lines[0].split(",")) == SWEEP_HEADER
        assert len(lines) == 3


def test_modes_coincide_without_launch_savings():
    with pytest.warns(UserWarning):
        cost = CostParams(n_kernels=1, t_kernel_launch_ms=0.05, t_graph_launch_ms=0.05)
    lengths = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0] * 20
    t = trace_of(lengths)
    # one executor per distinct length, so GRAPH never pads; one thread keeps the two modes in lockstep
    speedup, gain = compare_modes(t, ExecutorPool((1.0, 2.0, 3.0, 10.0)), cost, cfg(n_threads=1))
    assert speedup == pytest.approx(1.0)
    assert gain == pytest.approx(1.0)
    assert not math.isnan(speedup)
