"""Pools of fixed-length executors: planning against traffic and nearest-upper-bound routing."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import DataError, ResourceError, RoutingError, UsageError
from .labeling import nearest_rank
from .trace import MAX_AUDIO_SECONDS
from .traffic import (CostParams, EmpiricalDist, compute_time, executor_memory, fit_lognormal,
                      lognormal_quantile)

GRANULARITY_S = 0.01


class PlanStrategy(str, Enum):
    UNIFORM = "uniform"
    EMPIRICAL_QUANTILE = "empirical_quantile"
    LOGNORMAL_QUANTILE = "lognormal_quantile"
    TIME_WEIGHTED = "time_weighted"


@dataclass(frozen=True)
class ExecutorPool:
    lengths: tuple[float, ...]
    memory_mb: float = 0.0
    strategy: PlanStrategy | None = None

    def __post_init__(self):
        if not self.lengths:
            raise UsageError("executor pool is empty")
        if any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise UsageError("executor lengths must be strictly increasing")
        if self.lengths[0] <= 0 or self.lengths[-1] > MAX_AUDIO_SECONDS:
            raise UsageError("executor lengths must lie in (0, 10] seconds")

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def max_length(self) -> float:
        return self.lengths[-1]

    @classmethod
    def of(cls, lengths: Sequence[float], cost: CostParams | None = None) -> ExecutorPool:
        lengths = tuple(float(z) for z in lengths)
        mem = sum(executor_memory(cost, z) for z in lengths) if cost else 0.0
        return cls(lengths, mem)

    def to_dict(self) -> dict:
        return {
            "lengths_s": list(self.lengths),
            "strategy": self.strategy.value if self.strategy else None,
            "memory_mb": self.memory_mb,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ExecutorPool:
        strategy = d.get("strategy")
        return cls(tuple(float(z) for z in d["lengths_s"]), float(d.get("memory_mb", 0.0)),
                   PlanStrategy(strategy) if strategy else None)


def _weighted_nearest_rank(xs: Sequence[float], ws: Sequence[float], p: float) -> float:
    total = math.fsum(ws)
    target = p * total
    acc = 0.0
    for x, w in zip(xs, ws):
        acc += w
        if acc >= target * (1 - 1e-12):
            return x
    return xs[-1]


def _raw_lengths(dist: EmpiricalDist, n: int, strategy: PlanStrategy, cost: CostParams,
                 l_max: float) -> list[float]:
    probs = [i / n for i in range(1, n)]
    if strategy is PlanStrategy.UNIFORM:
        return [i * l_max / n for i in range(1, n)]
    if strategy is PlanStrategy.EMPIRICAL_QUANTILE:
        return [nearest_rank(list(dist.lengths), p) for p in probs]
    if strategy is PlanStrategy.LOGNORMAL_QUANTILE:
        ln = fit_lognormal(dist)
        return [min(lognormal_quantile(ln, p), l_max) for p in probs]
    if strategy is PlanStrategy.TIME_WEIGHTED:
        weights = [compute_time(cost, x) for x in dist.lengths]
        return [_weighted_nearest_rank(dist.lengths, weights, p) for p in probs]
    raise UsageError(f"unknown strategy {strategy!r}")


def plan_pool(dist: EmpiricalDist, n: int, strategy: PlanStrategy | str = PlanStrategy.TIME_WEIGHTED,
              cost: CostParams | None = None, budget_mb: float = math.inf,
              l_max: float = MAX_AUDIO_SECONDS) -> ExecutorPool:
    """Choose up to ``n`` executor lengths; the largest is always ``l_max``.

    Lengths falling in the same 10 ms bin collapse into one executor, so the
    returned pool can be smaller than ``n``.
    """
    if n < 1:
        raise UsageError("pool size must be at least 1")
    strategy = PlanStrategy(strategy)
    cost = cost or CostParams.default()
    if executor_memory(cost, l_max) > budget_mb:
        raise ResourceError(f"budget of {budget_mb} MB cannot hold the {l_max} s executor")

    candidates = [z for z in _raw_lengths(dist, n, strategy, cost, l_max) if 0 < z < l_max]
    candidates.append(l_max)
    by_bin: dict[int, float] = {}
    for z in candidates:
        key = round(z / GRANULARITY_S)
        by_bin[key] = max(z, by_bin.get(key, 0.0))
    by_bin[round(l_max / GRANULARITY_S)] = l_max
    lengths = tuple(sorted(by_bin.values()))

    memory = math.fsum(executor_memory(cost, z) for z in lengths)
    if memory > budget_mb:
        raise ResourceError(f"{len(lengths)} executors need {memory:.1f} MB, budget is {budget_mb} MB")
    return ExecutorPool(lengths, memory, strategy)


def route(pool: ExecutorPool, length_s: float) -> int:
    """Index of the smallest executor length >= ``length_s``."""
    if not length_s > 0:
        raise DataError(f"query length must be positive, got {length_s}")
    i = bisect.bisect_left(pool.lengths, length_s)
    if i == len(pool.lengths):
        raise RoutingError(f"{length_s} s exceeds the largest executor ({pool.max_length} s)")
    return i


def padding_waste(pool: ExecutorPool, dist: EmpiricalDist, cost: CostParams) -> float:
    """Mean extra compute (ms) spent on padding when ``dist`` is routed through ``pool``."""
    waste = [compute_time(cost, pool.lengths[route(pool, x)]) - compute_time(cost, x)
             for x in dist.lengths]
    return math.fsum(waste) / len(waste)
