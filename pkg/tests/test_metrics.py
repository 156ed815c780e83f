import math
import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from asrops.errors import UsageError
from asrops.metrics import (BUCKETS, LATENCY, SliRegistry, expose_text, parse_samples, parse_text,
                            record_query, registry_from_report, set_saturation)


def test_single_success_lands_on_bound():
    reg = record_query(SliRegistry(), 0.05)
    cum = dict(zip(BUCKETS, reg.cumulative_buckets()))
    assert cum[0.025] == 0 and cum[0.05] == 1
    assert reg.latency_sum == 0.05
    assert f"{LATENCY}_count 1" in expose_text(reg)


def test_error_leaves_histogram_alone():
    reg = record_query(SliRegistry(), None, "routing")
    assert reg.queries_total == 1 and reg.errors_total["routing"] == 1
    assert reg.latency_count == 0


def test_thousand_latencies_sum():
    rng = random.Random(2)
    xs = [rng.expovariate(20) for _ in range(1000)]
    reg = SliRegistry()
    for x in xs:
        record_query(reg, x)
    assert reg.latency_count == 1000
    assert reg.latency_sum == pytest.approx(math.fsum(xs), abs=1e-9)


def test_negative_latency_rejected():
    with pytest.raises(UsageError):
        record_query(SliRegistry(), -0.001)
    with pytest.raises(UsageError):
        set_saturation(SliRegistry(), 1.5)


def test_empty_registry_exposition():
    text = expose_text(SliRegistry())
    assert text == """\
# HELP asr_queries_total Voice queries received.
# TYPE asr_queries_total counter
asr_queries_total 0
# HELP asr_server_errors_total Queries that failed, by error kind.
# TYPE asr_server_errors_total counter
asr_server_errors_total{kind="routing"} 0
# HELP asr_response_latency_seconds Simulated response latency from arrival to device completion (decoding excluded).
# TYPE asr_response_latency_seconds histogram
asr_response_latency_seconds_bucket{le="0.005"} 0
asr_response_latency_seconds_bucket{le="0.01"} 0
asr_response_latency_seconds_bucket{le="0.025"} 0
asr_response_latency_seconds_bucket{le="0.05"} 0
asr_response_latency_seconds_bucket{le="0.1"} 0
asr_response_latency_seconds_bucket{le="0.25"} 0
asr_response_latency_seconds_bucket{le="0.5"} 0
asr_response_latency_seconds_bucket{le="1.0"} 0
asr_response_latency_seconds_bucket{le="2.5"} 0
asr_response_latency_seconds_bucket{le="5.0"} 0
asr_response_latency_seconds_bucket{le="10.0"} 0
asr_response_latency_seconds_bucket{le="+Inf"} 0
asr_response_latency_seconds_sum 0.0
asr_response_latency_seconds_count 0
# HELP asr_saturation_ratio Fraction of the run the device spent busy.
# TYPE asr_saturation_ratio gauge
asr_saturation_ratio 0.0
"""


def test_label_values_are_escaped():
    reg = record_query(SliRegistry(), None, 'odd "kind"\\with\nnewline')
    text = expose_text(reg)
    assert r'kind="odd \"kind\"\\with\nnewline"' in text
    assert parse_text(text).errors_total == reg.errors_total


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.floats(0, 20, allow_nan=False), st.sampled_from(["routing", "timeout", "a b"])),
                max_size=60),
       st.floats(0, 1))
def test_round_trip(events, sat):
    reg = SliRegistry()
    for e in events:
        record_query(reg, None, e) if isinstance(e, str) else record_query(reg, e)
    set_saturation(reg, sat)
    assert parse_text(expose_text(reg)) == reg


def test_buckets_cumulative():
    rng = random.Random(5)
    reg = SliRegistry()
    for _ in range(500):
        record_query(reg, rng.uniform(0, 12))
    samples = [(lab["le"], v) for name, lab, v in parse_samples(expose_text(reg)) if name.endswith("_bucket")]
    counts = [v for _, v in samples]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert samples[-1] == ("+Inf", 500)


def test_scrapes_consistent_under_writes():
    reg = SliRegistry()
    stop = threading.Event()

    def writer():
        while not stop.is_set():
            record_query(reg, 0.02)

    th = threading.Thread(target=writer)
    th.start()
    try:
        for _ in range(200):
            snap = parse_text(expose_text(reg))
            assert snap.latency_count == snap.queries_total
            assert snap.latency_sum == pytest.approx(0.02 * snap.latency_count)
    finally:
        stop.set()
        th.join()


def test_from_report(small_report):
    reg = registry_from_report(small_report)
    assert reg.latency_count == len(small_report.latencies_ms)
    assert reg.saturation == small_report.device_utilization


@pytest.fixture
def small_report(example_cost):
    from asrops.pool import ExecutorPool
    from asrops.sim import SimConfig, run_sim
    from asrops.trace import Query, Trace

    t = Trace(tuple(Query(f"q{i}", "d", 0, 1.0 + i % 3, "x", 0.5) for i in range(30)))
    return run_sim(t, ExecutorPool((2.0, 10.0)), example_cost, SimConfig(warmup=5))
