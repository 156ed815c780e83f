import json
from importlib import resources

import pytest

from asrops.trace import GenConfig, generate_trace
from asrops.traffic import CostParams


@pytest.fixture(scope="session")
def calibration_trace():
    cfg = json.loads(resources.files("asrops.data").joinpath("calibration_traffic.json").read_text())
    return generate_trace(GenConfig.from_dict(cfg))


@pytest.fixture(scope="session")
def default_cost():
    return CostParams.default()


@pytest.fixture
def example_cost():
    # the worked-example constants: c = (2, 0.5, 0.3), 500 kernels at 0.02 ms
    return CostParams(n_kernels=500, t_kernel_launch_ms=0.02, t_graph_launch_ms=0.05,
                      c0_ms=2.0, c1_ms_per_s=0.5, c2_ms_per_s2=0.3, mem0_mb=100.0, mem1_mb_per_s=50.0)


@pytest.fixture
def criterion(request, capsys):
    """Record and print one acceptance line: ``criterion(n, ok, detail)``."""
    log = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        log[n] = line
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if log:
        terminalreporter.section("acceptance criteria")
        for n in sorted(log):
            terminalreporter.write_line(log[n])
