"""End-to-end pipelines shared by the command line and the HTTP service."""

from __future__ import annotations

from dataclasses import dataclass

from .label_model import CurationReport, LabelModelParams, fit_em, filter_trace
from .labeling import DEFAULT_MIN_COUNT, RAPID_REPEAT_MS, LabelMatrix, apply_lfs, build_confidence_table
from .trace import SESSION_GAP_MS, Trace


@dataclass
class CurationResult:
    kept: Trace
    report: CurationReport
    matrix: LabelMatrix
    params: LabelModelParams


def curate(trace: Trace, *, min_count: int = DEFAULT_MIN_COUNT, keep_threshold: float = 0.5,
           symmetric: bool = False, reference: Trace | None = None,
           session_gap_ms: int = SESSION_GAP_MS, repeat_ms: int = RAPID_REPEAT_MS,
           tol: float = 1e-8, max_iters: int = 1000) -> CurationResult:
    """Confidence table, LF votes, EM fit and posterior filter in one pass.

    Percentiles come from ``reference`` when given, otherwise from ``trace`` itself.
    ``symmetric`` selects the class-independent accuracy/propensity model.
    """
    table = build_confidence_table(reference if reference is not None else trace, min_count)
    matrix = apply_lfs(trace, table, session_gap_ms=session_gap_ms, repeat_ms=repeat_ms)
    init = LabelModelParams.uniform(matrix.shape[1], class_conditional=not symmetric)
    params = fit_em(matrix, init, tol=tol, max_iters=max_iters)
    kept, report = filter_trace(trace, matrix, params, keep_threshold)
    return CurationResult(kept, report, matrix, params)
