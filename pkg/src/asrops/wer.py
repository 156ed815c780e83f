"""Word error rate."""

from __future__ import annotations

from .errors import DataError


def words(text: str) -> list[str]:
    return text.lower().split()


def edit_distance(ref: list[str], hyp: list[str]) -> int:
    """Levenshtein distance over tokens with unit substitution/insertion/deletion costs."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer(reference: str, hypothesis: str) -> float:
    ref = words(reference)
    if not ref:
        raise DataError("reference transcript is empty")
    return edit_distance(ref, words(hypothesis)) / len(ref)
