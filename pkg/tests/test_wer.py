import pytest
from hypothesis import given, strategies as st

from asrops.errors import DataError
from asrops.wer import edit_distance, wer, words

from oracles import min_edit_script


@pytest.mark.parametrize("ref, hyp, expected", [
    ("netflix", "netflix", 0.0),
    ("turn on the tv", "turn off tv", 0.5),
    ("netflix", "", 1.0),
    ("Netflix", "netflix", 0.0),
    ("go", "go back now", 2.0),
])
def test_examples(ref, hyp, expected):
    assert wer(ref, hyp) == expected


def test_empty_reference_rejected():
    with pytest.raises(DataError):
        wer("  ", "x")


@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=6).map(" ".join))
def test_identity(r):
    assert wer(r, r) == 0.0


@given(st.lists(st.sampled_from("abcde"), max_size=6), st.lists(st.sampled_from("abcde"), max_size=6))
def test_distance_matches_brute_force(ref, hyp):
    assert edit_distance(ref, hyp) == min_edit_script(ref, hyp)


def test_words_lowercases_and_splits():
    assert words("  Turn ON\tthe TV ") == ["turn", "on", "the", "tv"]
