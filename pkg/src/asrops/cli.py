"""Command-line entry point: ``asrops <subcommand> [flags]``.

Every subcommand accepts ``--seed`` and ``--config FILE.json``. Values resolve as
explicit flag, then the config file, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .errors import AsropsError, DataError, ResourceError, UsageError
from .metrics import expose_text, registry_from_report
from .pipelines import curate
from .pool import ExecutorPool, PlanStrategy, plan_pool
from .sim import Arrival, Mode, SimConfig, compare_modes, run_sim, sweep_graphs, sweep_threads, sweep_to_csv
from .trace import SESSION_GAP_MS, GenConfig, Trace, dump_trace, generate_trace, group_sessions, load_trace
from .traffic import CostParams, EmpiricalDist, fit_lognormal
from .wer import wer

# built-in defaults per subcommand; every flag below is declared with default=None
DEFAULTS: dict[str, dict[str, Any]] = {
    "gen-trace": {"calibration": False},
    "sessions": {"gap_ms": SESSION_GAP_MS},
    "curate": {"min_count": 5, "keep_threshold": 0.5, "symmetric": False},
    "fit-traffic": {},
    "plan-pool": {"n": 36, "strategy": PlanStrategy.TIME_WEIGHTED.value, "budget_mb": math.inf},
    "simulate": {"n": 36, "strategy": PlanStrategy.LOGNORMAL_QUANTILE.value, "mode": Mode.GRAPH.value,
                 "arrival": Arrival.SATURATION.value, "threads": 3, "warmup": 100},
    "sweep": {"over": "graphs", "n": 36, "threads": 3, "warmup": 100,
              "strategy": PlanStrategy.LOGNORMAL_QUANTILE.value, "budget_mb": math.inf},
    "compare": {"n": 36, "strategy": PlanStrategy.LOGNORMAL_QUANTILE.value, "threads": 3, "warmup": 100},
    "wer": {},
    "serve": {"host": "127.0.0.1", "port": 9100},
}
GEN_FLAGS = ("n_devices", "sessions_per_device", "mistranscription_prob", "repeat_prob_after_error",
             "long_query_prob", "max_queries")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", default=None, help="JSON file of flag values")


def _flag(p, name, **kw):
    p.add_argument(name, default=None, **kw)


def _switch(p, name, help):
    p.add_argument(name, action="store_const", const=True, default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asrops", description="Voice-query curation and inference-serving simulation.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("gen-trace", help="generate a synthetic query trace (JSONL)")
    _common(p)
    _flag(p, "--out", help="output JSONL (default stdout)")
    _flag(p, "--n-devices", type=int)
    _flag(p, "--sessions-per-device", type=int)
    _flag(p, "--mistranscription-prob", type=float)
    _flag(p, "--repeat-prob-after-error", type=float)
    _flag(p, "--long-query-prob", type=float)
    _flag(p, "--max-queries", type=int)
    _switch(p, "--calibration", "start from the shipped calibration traffic settings")

    p = sub.add_parser("sessions", help="group a trace into sessions")
    _common(p)
    _flag(p, "--trace", help="input JSONL trace")
    _flag(p, "--gap-ms", type=int)
    _flag(p, "--out", help="sessions JSON (default stdout)")

    p = sub.add_parser("curate", help="weakly label a trace and keep likely-correct queries")
    _common(p)
    _flag(p, "--trace")
    _flag(p, "--out", help="kept queries as JSONL")
    _flag(p, "--report", help="write the curation report JSON here as well")
    _flag(p, "--matrix", help="write the label matrix CSV")
    _flag(p, "--params", help="write fitted label-model parameters JSON")
    _flag(p, "--reference-trace", help="take confidence percentiles from this trace")
    _flag(p, "--min-count", type=int)
    _flag(p, "--keep-threshold", type=float)
    _switch(p, "--symmetric", "use class-independent LF accuracies and propensities")

    p = sub.add_parser("fit-traffic", help="fit a log-normal to query lengths")
    _common(p)
    _flag(p, "--trace")
    _flag(p, "--out")

    p = sub.add_parser("plan-pool", help="plan an executor pool")
    _common(p)
    _flag(p, "--trace", help="traffic sample (needed by quantile strategies when n > 1)")
    _flag(p, "--n", type=int)
    _flag(p, "--strategy", choices=[s.value for s in PlanStrategy])
    _flag(p, "--cost", help="CostParams JSON (default: shipped calibration)")
    _flag(p, "--budget-mb", type=float)
    _flag(p, "--out")

    for name, help in (("simulate", "simulate the inference server on a trace"),
                       ("compare", "GRAPH vs GRAPHLESS latency speedup and throughput gain"),
                       ("sweep", "sweep pool size or thread count")):
        p = sub.add_parser(name, help=help)
        _common(p)
        _flag(p, "--trace")
        _flag(p, "--pool", help="pool JSON; otherwise one is planned from the trace")
        _flag(p, "--n", type=int, help="pool size when planning")
        _flag(p, "--strategy", choices=[s.value for s in PlanStrategy])
        _flag(p, "--cost")
        _flag(p, "--threads", type=int)
        _flag(p, "--arrival", choices=[a.value for a in Arrival])
        _flag(p, "--rate", type=float, help="POISSON arrival rate (queries/s)")
        _flag(p, "--warmup", type=int)
        _flag(p, "--out")
        if name == "simulate":
            _flag(p, "--mode", choices=[m.value for m in Mode])
            _flag(p, "--metrics-out", help="write Prometheus exposition text")
        if name == "sweep":
            _flag(p, "--over", choices=["graphs", "threads"])
            _flag(p, "--values", help="comma-separated integers")
            _flag(p, "--budget-mb", type=float)

    p = sub.add_parser("wer", help="word error rate of a hypothesis")
    _common(p)
    _flag(p, "--ref")
    _flag(p, "--hyp")

    p = sub.add_parser("serve", help="run the HTTP service (GET /metrics and JSON endpoints)")
    _common(p)
    _flag(p, "--host")
    _flag(p, "--port", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    opts = dict(DEFAULTS[args.command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    extra = {}
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if key in flags:
            opts[key] = value
        else:
            extra[key] = value
    if extra and args.command != "gen-trace":
        raise UsageError(f"unknown config key(s): {', '.join(sorted(extra))}")
    opts.update({k: v for k, v in flags.items() if v is not None})
    opts["_extra"] = extra
    return opts


def _need(opts: dict, key: str) -> Any:
    if opts.get(key) is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return opts[key]


def _load(path: str) -> Trace:
    try:
        return load_trace(path)
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc.strerror}") from None


def _read_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} {path} is not valid JSON: {exc.msg}") from None


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ResourceError(f"cannot write {path}: {exc.strerror}") from None


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _cost(opts: dict) -> CostParams:
    if opts.get("cost") is None:
        return CostParams.default()
    return CostParams.from_dict(_read_json(opts["cost"], "cost file"))


def _pool(opts: dict, trace: Trace, cost: CostParams) -> ExecutorPool:
    if opts.get("pool") is not None:
        try:
            return ExecutorPool.from_dict(_read_json(opts["pool"], "pool file"))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed pool file: {exc}") from None
    return plan_pool(EmpiricalDist.from_queries(trace.queries), opts["n"], opts["strategy"], cost)


def _sim_config(opts: dict, **over) -> SimConfig:
    arrival = opts.get("arrival") or Arrival.SATURATION.value
    return SimConfig(n_threads=opts["threads"], mode=opts.get("mode", Mode.GRAPH.value), arrival=arrival,
                     rate_qps=opts.get("rate"), seed=opts.get("seed") or 0, warmup=opts["warmup"], **over)


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values expects comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError("--values is empty")
    return values


def cmd_gen_trace(o: dict) -> None:
    base: dict[str, Any] = {}
    if o["calibration"]:
        base = json.loads(resources.files("asrops.data").joinpath("calibration_traffic.json").read_text())
    base.update(o["_extra"])
    base.update({k: o[k] for k in GEN_FLAGS if o.get(k) is not None})
    if o.get("seed") is not None:
        base["seed"] = o["seed"]
    _emit(dump_trace(generate_trace(GenConfig.from_dict(base))), o.get("out"))


def cmd_sessions(o: dict) -> None:
    trace = _load(_need(o, "trace"))
    sessions = group_sessions(trace, o["gap_ms"])
    out = [{"device_id": s.device_id, "query_ids": [q.id for q in s.queries]} for s in sessions]
    _emit(_dumps(out), o.get("out"))


def cmd_curate(o: dict) -> None:
    trace = _load(_need(o, "trace"))
    ref = _load(o["reference_trace"]) if o.get("reference_trace") else None
    res = curate(trace, min_count=o["min_count"], keep_threshold=o["keep_threshold"],
                 symmetric=bool(o["symmetric"]), reference=ref)
    if o.get("out"):
        _emit(dump_trace(res.kept), o["out"])
    if o.get("matrix"):
        _emit(res.matrix.to_csv(), o["matrix"])
    if o.get("params"):
        _emit(res.params.to_json(), o["params"])
    report = _dumps(res.report.to_dict())
    if o.get("report"):
        _emit(report, o["report"])
    sys.stdout.write(report)


def cmd_fit_traffic(o: dict) -> None:
    trace = _load(_need(o, "trace"))
    params = fit_lognormal(EmpiricalDist.from_queries(trace.queries))
    _emit(_dumps({**params.to_dict(), "n": len(trace)}), o.get("out"))


def cmd_plan_pool(o: dict) -> None:
    cost, strategy = _cost(o), PlanStrategy(o["strategy"])
    if o.get("trace"):
        dist = EmpiricalDist.from_queries(_load(o["trace"]).queries)
    elif o["n"] == 1 or strategy is PlanStrategy.UNIFORM:
        dist = EmpiricalDist((10.0,))  # unused by these plans
    else:
        raise UsageError(f"--trace is required for {strategy.value} with n > 1")
    pool = plan_pool(dist, o["n"], strategy, cost, o["budget_mb"])
    _emit(pool.to_json(), o.get("out"))


def cmd_simulate(o: dict) -> None:
    trace, cost = _load(_need(o, "trace")), _cost(o)
    pool = _pool(o, trace, cost) if o["mode"] == Mode.GRAPH.value else None
    report = run_sim(trace, pool, cost, _sim_config(o))
    if o.get("metrics_out"):
        _emit(expose_text(registry_from_report(report)), o["metrics_out"])
    if o.get("out"):
        _emit(report.to_json(), o["out"])
    summary = {k: v for k, v in report.to_dict().items() if k != "latencies_ms"}
    sys.stdout.write(_dumps(summary))


def cmd_sweep(o: dict) -> None:
    trace, cost = _load(_need(o, "trace")), _cost(o)
    values = _int_list(_need(o, "values"))
    cfg = _sim_config(o)
    if o["over"] == "graphs":
        rows = sweep_graphs(trace, cost, cfg, values, o["strategy"], o["budget_mb"])
    else:
        rows = sweep_threads(trace, _pool(o, trace, cost), cost, cfg, values)
    _emit(sweep_to_csv(rows), o.get("out"))


def cmd_compare(o: dict) -> None:
    trace, cost = _load(_need(o, "trace")), _cost(o)
    speedup, gain = compare_modes(trace, _pool(o, trace, cost), cost, _sim_config(o))
    _emit(_dumps({"latency_speedup": speedup, "throughput_gain": gain}), o.get("out"))


def cmd_wer(o: dict) -> None:
    print(wer(_need(o, "ref"), _need(o, "hyp")))


def cmd_serve(o: dict) -> None:
    from .metrics import SliRegistry
    from .service import serve_metrics

    serve_metrics(SliRegistry(), o["port"], o["host"])


COMMANDS = {
    "gen-trace": cmd_gen_trace, "sessions": cmd_sessions, "curate": cmd_curate,
    "fit-traffic": cmd_fit_traffic, "plan-pool": cmd_plan_pool, "simulate": cmd_simulate,
    "sweep": cmd_sweep, "compare": cmd_compare, "wer": cmd_wer, "serve": cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip() + "\nasrops: error: a subcommand is required")
        COMMANDS[args.command](_resolve(args))
    except AsropsError as exc:
        print(f"asrops: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        # e.g. a config file value of the wrong type or outside an enum
        print(f"asrops: invalid option value: {exc}", file=sys.stderr)
        return UsageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
