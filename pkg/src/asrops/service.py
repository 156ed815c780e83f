"""HTTP service: the metrics scrape endpoint plus JSON wrappers around the core pipelines."""

from __future__ import annotations

import math
import socket

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response

from . import schemas
from .errors import AsropsError, DataError, ResourceError
from .metrics import CONTENT_TYPE, SliRegistry, expose_text, registry_from_report
from .pipelines import curate
from .pool import ExecutorPool, plan_pool, route
from .sim import SimConfig, run_sim
from .trace import Trace, query_from_dict
from .traffic import CostParams, EmpiricalDist
from .wer import wer

_STATUS = {DataError: 422, ResourceError: 507}


def _cost(body: schemas.CostIn | None) -> CostParams:
    base = CostParams.default()
    if body is None:
        return base
    return CostParams.from_dict({**base.to_dict(), **body.model_dump(exclude_none=True)})


def _trace(queries: list[schemas.QueryIn]) -> Trace:
    return Trace(tuple(query_from_dict(q.model_dump(exclude_none=True), f"queries[{i}]")
                       for i, q in enumerate(queries)))


def create_app(registry: SliRegistry | None = None) -> FastAPI:
    reg = registry if registry is not None else SliRegistry()
    app = FastAPI(title="asrops", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.registry = reg

    @app.exception_handler(AsropsError)
    async def _domain_error(_: Request, exc: AsropsError):
        status = next((s for cls, s in _STATUS.items() if isinstance(exc, cls)), 400)
        return JSONResponse({"detail": str(exc)}, status_code=status)

    @app.get("/metrics")
    def metrics() -> Response:
        return Response(expose_text(reg), media_type=CONTENT_TYPE)

    @app.post("/v1/wer", response_model=schemas.WerResponse)
    def wer_endpoint(body: schemas.WerRequest):
        return {"wer": wer(body.reference, body.hypothesis)}

    @app.post("/v1/route", response_model=schemas.RouteResponse)
    def route_endpoint(body: schemas.RouteRequest):
        pool = ExecutorPool(tuple(body.lengths_s))
        i = route(pool, body.length_s)
        return {"index": i, "executor_length_s": pool.lengths[i]}

    @app.post("/v1/plan-pool", response_model=schemas.PoolOut)
    def plan_endpoint(body: schemas.PlanRequest):
        if not body.sample_lengths_s:
            raise HTTPException(422, "sample_lengths_s must not be empty")
        budget = math.inf if body.budget_mb is None else body.budget_mb
        pool = plan_pool(EmpiricalDist(tuple(body.sample_lengths_s)), body.n, body.strategy,
                         _cost(body.cost), budget)
        return pool.to_dict()

    @app.post("/v1/curate", response_model=schemas.CurateResponse)
    def curate_endpoint(body: schemas.CurateRequest):
        res = curate(_trace(body.queries), min_count=body.min_count,
                     keep_threshold=body.keep_threshold, symmetric=body.symmetric)
        return {**res.report.to_dict(), "kept_ids": res.report.kept_ids,
                "params": res.params.to_dict()}

    @app.post("/v1/simulate", response_model=schemas.SimulateResponse)
    def simulate_endpoint(body: schemas.SimulateRequest):
        trace, cost = _trace(body.queries), _cost(body.cost)
        if body.pool is not None:
            pool = ExecutorPool.of(body.pool, cost)
        else:
            pool = plan_pool(EmpiricalDist.from_queries(trace.queries), body.n_graphs,
                             body.strategy, cost)
        cfg = SimConfig(body.n_threads, body.mode, body.arrival, body.rate_qps, body.seed,
                        body.warmup)
        report = run_sim(trace, pool, cost, cfg)
        registry_from_report(report, reg)
        return report.to_dict()

    return app


def check_port(host: str, port: int) -> None:
    """Fail fast with a resource error if ``port`` is already bound."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind((host, port))
        except OSError as exc:
            raise ResourceError(f"cannot listen on {host}:{port}: {exc.strerror}") from None


def serve_metrics(reg: SliRegistry, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    check_port(host, port)
    uvicorn.run(create_app(reg), host=host, port=port, log_level="warning")
