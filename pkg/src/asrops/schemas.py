"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .pool import PlanStrategy
from .sim import Arrival, Mode


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class QueryIn(_Strict):
    id: str
    device_id: str
    timestamp_ms: int
    audio_seconds: float
    transcript: str
    confidence: float
    gold_transcript: Optional[str] = None
    gold_correct: Optional[bool] = None


class CostIn(_Strict):
    """Overrides applied on top of the shipped default calibration."""

    n_kernels: Optional[int] = None
    t_kernel_launch_ms: Optional[float] = None
    t_graph_launch_ms: Optional[float] = None
    c0_ms: Optional[float] = None
    c1_ms_per_s: Optional[float] = None
    c2_ms_per_s2: Optional[float] = None
    mem0_mb: Optional[float] = None
    mem1_mb_per_s: Optional[float] = None


class WerRequest(_Strict):
    reference: str
    hypothesis: str


class WerResponse(BaseModel):
    wer: float


class RouteRequest(_Strict):
    lengths_s: list[float] = Field(min_length=1)
    length_s: float


class RouteResponse(BaseModel):
    index: int
    executor_length_s: float


class PoolOut(BaseModel):
    lengths_s: list[float]
    strategy: Optional[PlanStrategy]
    memory_mb: float


class PlanRequest(_Strict):
    n: int = Field(ge=1)
    strategy: PlanStrategy = PlanStrategy.TIME_WEIGHTED
    sample_lengths_s: list[float] = Field(default_factory=list)
    cost: Optional[CostIn] = None
    budget_mb: Optional[float] = None


class CurateRequest(_Strict):
    queries: list[QueryIn] = Field(min_length=1)
    min_count: int = Field(default=5, ge=1)
    keep_threshold: float = Field(default=0.5, gt=0, lt=1)
    symmetric: bool = False


class CurateResponse(BaseModel):
    total: int
    kept: int
    discarded_incorrect: int
    discarded_all_abstain: int
    raw_error_rate: Optional[float]
    kept_error_rate: Optional[float]
    kept_ids: list[str]
    params: dict


class SimulateRequest(_Strict):
    queries: list[QueryIn] = Field(min_length=1)
    pool: Optional[list[float]] = None
    n_graphs: int = Field(default=36, ge=1)
    strategy: PlanStrategy = PlanStrategy.LOGNORMAL_QUANTILE
    cost: Optional[CostIn] = None
    n_threads: int = Field(default=3, ge=1)
    mode: Mode = Mode.GRAPH
    arrival: Arrival = Arrival.SATURATION
    rate_qps: Optional[float] = None
    seed: int = 0
    warmup: int = Field(default=0, ge=0)


class SimulateResponse(BaseModel):
    mode: Mode
    arrivals: int
    completed: int
    errors: int
    error_kinds: dict[str, int]
    throughput_qps: float
    device_utilization: float
    realtime_factor: float
    makespan_ms: float
    max_queue_depth: int
    per_executor_hits: list[int]
    latency_p50_ms: Optional[float]
    latency_p99_ms: Optional[float]
    latency_mean_ms: Optional[float]
