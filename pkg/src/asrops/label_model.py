"""Two-class latent label model over labeling-function votes, fitted with EM.

Each LF j fires with probability ``propensity[j]`` regardless of the true class
and, when it fires, votes the true class with probability ``accuracy[j]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .labeling import LabelMatrix, Verdict
from .trace import Trace, weak_label_error_rate

CLAMP = 1e-4


@dataclass(frozen=True)
class LabelModelParams:
    """Label model parameters.

    With ``accuracy_incorrect``/``propensity_incorrect`` unset, every LF shares one
    accuracy and one propensity across both classes. Setting them makes the model
    class-conditional: ``accuracy``/``propensity`` then describe items whose true
    label is CORRECT and the ``*_incorrect`` tuples items whose label is INCORRECT.
    """

    prior: float
    accuracy: tuple[float, ...]
    propensity: tuple[float, ...]
    accuracy_incorrect: tuple[float, ...] | None = None
    propensity_incorrect: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.accuracy_incorrect is None) != (self.propensity_incorrect is None):
            raise UsageError("set both class-conditional tuples or neither")
        k = len(self.accuracy)
        groups = [self.accuracy, self.propensity]
        if self.class_conditional:
            groups += [self.accuracy_incorrect, self.propensity_incorrect]
        if any(len(g) != k for g in groups):
            raise UsageError("every parameter tuple needs one entry per LF")
        if not 0 < self.prior < 1:
            raise UsageError(f"prior must lie in (0, 1), got {self.prior}")
        if not all(0 < a < 1 for g in groups[0::2] for a in g):
            raise UsageError("accuracies must lie in (0, 1)")
        if not all(0 < r <= 1 for g in groups[1::2] for r in g):
            raise UsageError("propensities must lie in (0, 1]")

    @property
    def n_lfs(self) -> int:
        return len(self.accuracy)

    @property
    def class_conditional(self) -> bool:
        return self.accuracy_incorrect is not None

    @classmethod
    def uniform(cls, n_lfs: int, prior: float = 0.5, accuracy: float = 0.7,
                propensity: float = 0.5, class_conditional: bool = False) -> LabelModelParams:
        a, r = (accuracy,) * n_lfs, (propensity,) * n_lfs
        if class_conditional:
            return cls(prior, a, r, a, r)
        return cls(prior, a, r)

    def emission_logs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-LF log P(vote | class) as two (k, 3) arrays indexed by vote + 1."""
        a_pos, r_pos = np.asarray(self.accuracy), np.asarray(self.propensity)
        if self.class_conditional:
            a_neg, r_neg = np.asarray(self.accuracy_incorrect), np.asarray(self.propensity_incorrect)
        else:
            a_neg, r_neg = a_pos, r_pos
        with np.errstate(divide="ignore"):
            pos = np.stack([np.log(r_pos) + np.log1p(-a_pos), np.log1p(-r_pos),
                            np.log(r_pos) + np.log(a_pos)], axis=1)
            neg = np.stack([np.log(r_neg) + np.log(a_neg), np.log1p(-r_neg),
                            np.log(r_neg) + np.log1p(-a_neg)], axis=1)
        return pos, neg

    def to_dict(self) -> dict:
        d = {"prior": self.prior, "accuracy": list(self.accuracy),
             "propensity": list(self.propensity)}
        if self.class_conditional:
            d["accuracy_incorrect"] = list(self.accuracy_incorrect)
            d["propensity_incorrect"] = list(self.propensity_incorrect)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LabelModelParams:
        opt = {k: tuple(map(float, d[k])) for k in ("accuracy_incorrect", "propensity_incorrect")
               if d.get(k) is not None}
        return cls(float(d["prior"]), tuple(map(float, d["accuracy"])),
                   tuple(map(float, d["propensity"])), **opt)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class CurationReport:
    total: int
    kept: int
    discarded_incorrect: int
    discarded_all_abstain: int
    raw_error_rate: float | None = None
    kept_error_rate: float | None = None
    kept_ids: list[str] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "discarded_incorrect": self.discarded_incorrect,
            "discarded_all_abstain": self.discarded_all_abstain,
            "raw_error_rate": self.raw_error_rate,
            "kept_error_rate": self.kept_error_rate,
        }


def _vote_array(matrix: LabelMatrix) -> np.ndarray:
    m, k = matrix.shape
    return np.asarray([[int(v) for v in row] for row in matrix.verdicts], dtype=np.int64).reshape(m, k)


def _class_loglik(params: LabelModelParams, votes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log P(y) + log P(row | y) for y = CORRECT and y = INCORRECT, one entry per row."""
    pos, neg = params.emission_logs()
    cols = np.arange(votes.shape[1])
    idx = votes + 1
    return (math.log(params.prior) + pos[cols, idx].sum(axis=1),
            math.log1p(-params.prior) + neg[cols, idx].sum(axis=1))


def _log_odds(params: LabelModelParams, votes: np.ndarray) -> np.ndarray:
    if params.class_conditional:
        pos, neg = _class_loglik(params, votes)
        return pos - neg
    # abstentions contribute (1 - r) to both classes and cancel
    a = np.asarray(params.accuracy)
    w = np.log(a) - np.log1p(-a)
    return math.log(params.prior) - math.log1p(-params.prior) + votes @ w


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def posterior(params: LabelModelParams, row: Sequence[Verdict | int]) -> float:
    """P(true label is CORRECT | the LF votes in ``row``)."""
    if len(row) != params.n_lfs:
        raise UsageError(f"row has {len(row)} votes, model has {params.n_lfs} LFs")
    votes = np.asarray([[int(v) for v in row]], dtype=np.int64)
    return float(_sigmoid(_log_odds(params, votes))[0])


def posteriors(params: LabelModelParams, matrix: LabelMatrix) -> np.ndarray:
    votes = _vote_array(matrix)
    if votes.shape[1] != params.n_lfs:
        raise UsageError("matrix width does not match the model")
    return _sigmoid(_log_odds(params, votes))


def log_likelihood(params: LabelModelParams, votes: np.ndarray,
                   counts: np.ndarray | None = None) -> float:
    """Observed-data log-likelihood of a vote array, rows weighted by ``counts``."""
    pos, neg = _class_loglik(params, votes)
    ll = np.logaddexp(pos, neg)
    return math.fsum(ll if counts is None else counts * ll)


def _ratio(num: np.ndarray, den: np.ndarray, fallback: Sequence[float]) -> np.ndarray:
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.asarray(fallback, dtype=float))


def fit_em(matrix: LabelMatrix, init: LabelModelParams | None = None, tol: float = 1e-8,
           max_iters: int = 1000, history: list[float] | None = None) -> LabelModelParams:
    """Maximum-likelihood fit by EM; the model structure follows ``init``.

    The log-likelihood of the starting point and of every iterate is appended
    to ``history`` when a list is given.
    """
    m, k = matrix.shape
    if m == 0:
        raise DataError("cannot fit a label model to an empty matrix")
    if tol <= 0:
        raise UsageError("tol must be positive")
    params = init or LabelModelParams.uniform(k)
    if params.n_lfs != k:
        raise UsageError("init has the wrong number of LFs")

    # rows take at most 3**k distinct values; work on patterns weighted by multiplicity
    votes, counts = np.unique(_vote_array(matrix), axis=0, return_counts=True)
    counts = counts.astype(float)
    fired = (votes != 0).astype(float)
    says_pos = (votes > 0).astype(float)
    says_neg = (votes < 0).astype(float)

    ll = log_likelihood(params, votes, counts)
    if history is not None:
        history.append(ll)
    for _ in range(max_iters):
        pos, neg = _class_loglik(params, votes)
        g = np.exp(pos - np.logaddexp(pos, neg)) * counts   # expected CORRECT mass per pattern
        h = counts - g                                       # expected INCORRECT mass

        prior = float(g.sum() / m)
        if params.class_conditional:
            fired_pos, fired_neg = g @ fired, h @ fired
            acc = _ratio(g @ says_pos, fired_pos, params.accuracy)
            acc_neg = _ratio(h @ says_neg, fired_neg, params.accuracy_incorrect)
            prop = _ratio(fired_pos, np.full(k, g.sum()), params.propensity)
            prop_neg = _ratio(fired_neg, np.full(k, h.sum()), params.propensity_incorrect)
            params = LabelModelParams(_clamp(prior), _clamp_all(acc), _clamp_all(prop),
                                      _clamp_all(acc_neg), _clamp_all(prop_neg))
        else:
            n_fired = counts @ fired
            acc = _ratio(g @ says_pos + h @ says_neg, n_fired, params.accuracy)
            params = LabelModelParams(_clamp(prior), _clamp_all(acc), _clamp_all(n_fired / m))

        new_ll = log_likelihood(params, votes, counts)
        if history is not None:
            history.append(new_ll)
        gain, ll = new_ll - ll, new_ll
        if gain < tol:
            break
    return params


def _clamp(x: float) -> float:
    return float(min(max(x, CLAMP), 1 - CLAMP))


def _clamp_all(xs) -> tuple[float, ...]:
    return tuple(_clamp(x) for x in xs)


def filter_trace(trace: Trace, matrix: LabelMatrix, params: LabelModelParams,
                 keep_threshold: float = 0.5) -> tuple[Trace, CurationReport]:
    if not 0 < keep_threshold < 1:
        raise UsageError("keep_threshold must lie in (0, 1)")
    if tuple(q.id for q in trace.queries) != matrix.query_ids:
        raise UsageError("label matrix rows are not aligned with the trace")

    kept, n_incorrect, n_abstain = [], 0, 0
    if len(trace):
        post = posteriors(params, matrix)
        for q, row, p in zip(trace.queries, matrix.verdicts, post):
            if all(v == Verdict.ABSTAIN for v in row):
                n_abstain += 1
            elif p > keep_threshold:
                kept.append(q)
            else:
                n_incorrect += 1

    report = CurationReport(
        total=len(trace),
        kept=len(kept),
        discarded_incorrect=n_incorrect,
        discarded_all_abstain=n_abstain,
        raw_error_rate=weak_label_error_rate(trace.queries),
        kept_error_rate=weak_label_error_rate(kept),
        kept_ids=[q.id for q in kept],
    )
    return Trace(tuple(kept)), report
