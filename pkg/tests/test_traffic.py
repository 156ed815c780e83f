import math
import random
import warnings

import pytest

from asrops.errors import DataError, UsageError
from asrops.traffic import (CostParams, EmpiricalDist, LogNormalParams, compute_time, executor_memory,
                            fit_lognormal, graph_service, graphless_service, lognormal_quantile,
                            normal_quantile)

from oracles import inverse_normal


class TestFit:
    def test_two_points(self):
        p = fit_lognormal([math.e, math.e ** 3])
        assert (p.mu, p.sigma) == pytest.approx((2.0, 1.0), abs=1e-12)

    def test_constant_is_degenerate(self):
        p = fit_lognormal([math.e] * 5)
        assert p.mu == pytest.approx(1.0) and p.sigma == 0 and p.degenerate

    def test_single_value(self):
        assert fit_lognormal([2.5]).degenerate

    def test_recovers_sampler(self):
        rng = random.Random(0)
        p = fit_lognormal([rng.lognormvariate(0, 0.5) for _ in range(100_000)])
        assert p.mu == pytest.approx(0, abs=0.02)
        assert p.sigma == pytest.approx(0.5, abs=0.02)

    def test_errors(self):
        with pytest.raises(DataError):
            fit_lognormal([])
        with pytest.raises(DataError):
            EmpiricalDist((0.0, 1.0))
        with pytest.raises(DataError):
            EmpiricalDist((10.5,))


class TestQuantile:
    def test_median(self):
        assert lognormal_quantile(LogNormalParams(0, 1), 0.5) == pytest.approx(1.0, abs=1e-15)

    # expected values frozen from the high-precision oracle
    def test_upper_tail(self):
        assert lognormal_quantile(LogNormalParams(0, 1), 0.975) == pytest.approx(7.0990713842313, rel=1e-12)
        assert inverse_normal(0.975) == pytest.approx(1.959963984540054, abs=1e-15)

    def test_lower_quartile(self):
        assert lognormal_quantile(LogNormalParams(0, 0.5), 0.25) == pytest.approx(0.7137340428082, rel=1e-12)

    @pytest.mark.parametrize("p", [1e-10, 0.001, 0.02425, 0.1, 0.25, 0.5, 0.75, 0.9, 0.97575, 0.999, 1 - 1e-10])
    def test_inverse_normal_against_high_precision(self, p):
        assert normal_quantile(p) == pytest.approx(inverse_normal(p), abs=1e-12)

    def test_domain(self):
        for p in (0, 1, -0.1):
            with pytest.raises(UsageError):
                normal_quantile(p)

    def test_increasing_and_inverts_cdf(self):
        ln = LogNormalParams(0.1, 0.6)
        qs = [lognormal_quantile(ln, i / 100) for i in range(1, 100)]
        assert all(b > a for a, b in zip(qs, qs[1:]))
        for i in range(0, 100):
            x = 0.1 + i * 0.099
            assert lognormal_quantile(ln, ln.cdf(x)) == pytest.approx(x, abs=1e-6)


class TestCost:
    def test_compute(self, example_cost):
        assert compute_time(example_cost, 0) == 2.0
        assert compute_time(example_cost, 10) == pytest.approx(37.0)

    def test_pure_quadratic(self):
        c = CostParams(c0_ms=0, c1_ms_per_s=0, c2_ms_per_s2=0.4)
        assert compute_time(c, 6) == pytest.approx(4 * compute_time(c, 3))

    def test_graphless(self, example_cost):
        assert graphless_service(example_cost, 2) == pytest.approx(14.2)
        with pytest.warns(UserWarning):
            no_kernels = CostParams(n_kernels=0, t_graph_launch_ms=0)
        assert graphless_service(no_kernels, 3) == compute_time(no_kernels, 3)

    def test_graph(self, example_cost):
        assert graph_service(example_cost, 10) == pytest.approx((0.05, 37.0))

    def test_memory(self, example_cost):
        assert executor_memory(example_cost, 0) == 100
        assert executor_memory(example_cost, 10) == 600

    def test_monotone(self, default_cost):
        grid = [i / 10 for i in range(101)]
        for f in (compute_time, graphless_service, executor_memory):
            vals = [f(default_cost, x) for x in grid]
            assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(UsageError):
            CostParams(c0_ms=-1)
        with pytest.raises(UsageError, match="unknown"):
            CostParams.from_dict({"bogus": 1})
        with pytest.warns(UserWarning):
            CostParams(n_kernels=1, t_kernel_launch_ms=0.01, t_graph_launch_ms=0.05)

    def test_default_calibration_loads(self, tmp_path):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            c = CostParams.default()
        path = tmp_path / "c.json"
        path.write_text(__import__("json").dumps(c.to_dict()))
        assert CostParams.load(path) == c
        assert c.t_graph_launch_ms < c.kernel_launch_overhead_ms
