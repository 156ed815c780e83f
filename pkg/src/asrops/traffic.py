"""Query-length distributions and the per-query inference cost model."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from statistics import NormalDist
from typing import Iterable

from .errors import DataError, UsageError
from .trace import MAX_AUDIO_SECONDS

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class EmpiricalDist:
    lengths: tuple[float, ...]

    def __post_init__(self):
        if not self.lengths:
            raise DataError("length distribution is empty")
        ordered = tuple(sorted(float(x) for x in self.lengths))
        if ordered[0] <= 0 or ordered[-1] > MAX_AUDIO_SECONDS:
            raise DataError("lengths must lie in (0, 10] seconds")
        object.__setattr__(self, "lengths", ordered)

    @classmethod
    def from_queries(cls, queries: Iterable) -> EmpiricalDist:
        return cls(tuple(q.audio_seconds for q in queries))

    def __len__(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise UsageError("sigma must be non-negative")

    @property
    def degenerate(self) -> bool:
        return self.sigma == 0

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> LogNormalParams:
        return cls(float(d["mu"]), float(d["sigma"]))

    def cdf(self, x: float) -> float:
        if x <= 0:
            return 0.0
        if self.degenerate:
            return 1.0 if math.log(x) >= self.mu else 0.0
        return _STD_NORMAL.cdf((math.log(x) - self.mu) / self.sigma)


def fit_lognormal(lengths: EmpiricalDist | Iterable[float]) -> LogNormalParams:
    """Maximum-likelihood fit: mean and population standard deviation of the log lengths."""
    xs = lengths.lengths if isinstance(lengths, EmpiricalDist) else tuple(lengths)
    if not xs:
        raise DataError("cannot fit an empty sample")
    if min(xs) <= 0:
        raise DataError("log-normal fit needs strictly positive lengths")
    logs = [math.log(x) for x in xs]
    mu = math.fsum(logs) / len(logs)
    var = math.fsum((y - mu) ** 2 for y in logs) / len(logs)
    sigma = math.sqrt(var)
    if sigma < 1e-12:
        sigma = 0.0
    return LogNormalParams(mu, sigma)


def normal_quantile(p: float) -> float:
    if not 0 < p < 1:
        raise UsageError(f"probability must lie in (0, 1), got {p}")
    # Wichura AS241, |error| ~ 1e-16
    return _STD_NORMAL.inv_cdf(p)


def lognormal_quantile(params: LogNormalParams, p: float) -> float:
    return math.exp(params.mu + params.sigma * normal_quantile(p))


@dataclass(frozen=True)
class CostParams:
    """Inference cost model. Times in milliseconds, lengths in seconds, memory in MB."""

    n_kernels: int = 500
    t_kernel_launch_ms: float = 0.02
    t_graph_launch_ms: float = 0.05
    c0_ms: float = 2.0
    c1_ms_per_s: float = 0.5
    c2_ms_per_s2: float = 0.3
    mem0_mb: float = 100.0
    mem1_mb_per_s: float = 50.0

    def __post_init__(self):
        if self.n_kernels < 0:
            raise UsageError("n_kernels must be non-negative")
        if self.t_kernel_launch_ms < 0 or self.t_graph_launch_ms < 0:
            raise UsageError("launch times must be non-negative")
        for name in ("c0_ms", "c1_ms_per_s", "c2_ms_per_s2", "mem0_mb", "mem1_mb_per_s"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative")
        if self.t_graph_launch_ms >= self.n_kernels * self.t_kernel_launch_ms:
            warnings.warn("graph launch is no cheaper than launching the kernels one by one",
                          stacklevel=3)

    @property
    def kernel_launch_overhead_ms(self) -> float:
        return self.n_kernels * self.t_kernel_launch_ms

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> CostParams:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown CostParams key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> CostParams:
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls) -> CostParams:
        text = resources.files("asrops.data").joinpath("default_cost.json").read_text()
        return cls.from_dict(json.loads(text))


def compute_time(cost: CostParams, length_s: float) -> float:
    """Device time for one forward pass over ``length_s`` seconds of audio."""
    if length_s < 0:
        raise UsageError("length must be non-negative")
    return cost.c0_ms + cost.c1_ms_per_s * length_s + cost.c2_ms_per_s2 * length_s * length_s


def graphless_service(cost: CostParams, length_s: float) -> float:
    """Thread and device time when every kernel is launched individually."""
    return cost.kernel_launch_overhead_ms + compute_time(cost, length_s)


def graph_service(cost: CostParams, z: float) -> tuple[float, float]:
    """(thread_ms, device_ms) for one launch of an executor captured at length ``z``."""
    return cost.t_graph_launch_ms, compute_time(cost, z)


def executor_memory(cost: CostParams, z: float) -> float:
    return cost.mem0_mb + cost.mem1_mb_per_s * z
