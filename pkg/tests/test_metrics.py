import numpy as np
import pytest

from autoss.domain.metrics import (
    DistanceCache,
    Ordering,
    compare,
    dp_row,
    dst_min,
    edit_distance,
    range_lcp,
    sort_corpus,
)
from autoss.domain.model import StringRange
from tests.helpers import dp_distance, random_strings


@pytest.mark.parametrize(
    "a, b, expected",
    [("kitten", "sitting", 3), ("abc", "abc", 0), ("", "abc", 3), ("abc", "", 3), ("", "", 0)],
)
def test_edit_distance_examples(a, b, expected):
    assert edit_distance(a, b) == expected


def test_edit_distance_matches_full_table():
    rng = np.random.default_rng(1)
    words = random_strings(rng, 400, min_len=0, max_len=9, alphabet="abc")
    for i, j in rng.integers(0, len(words), size=(10_000, 2)):
        a, b = words[int(i)], words[int(j)]
        assert edit_distance(a, b) == dp_distance(a, b)


def test_edit_distance_is_a_metric():
    rng = np.random.default_rng(4)
    words = random_strings(rng, 300, min_len=0, max_len=8, alphabet="abcd")
    for _ in range(3000):
        a, b, c = (words[int(i)] for i in rng.integers(0, len(words), size=3))
        assert edit_distance(a, b) == edit_distance(b, a)
        assert (edit_distance(a, b) == 0) == (a == b)
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def test_edit_distance_counts_code_points():
    assert edit_distance("naïve", "naive") == 1
    assert edit_distance("日本", "日本語") == 1


def test_compare():
    assert compare("abc", "abd") is Ordering.LESS
    assert compare("ab", "abc") is Ordering.LESS
    assert compare("x", "x") is Ordering.EQUAL
    assert compare("b", "abc") is Ordering.GREATER


def test_sort_corpus_is_dictionary_order():
    assert sort_corpus(["b", "abc", "ab", "a"]) == ["a", "ab", "abc", "b"]


@pytest.mark.parametrize(
    "lo, hi, expected",
    [("abc", "abd", "ab"), ("s", "s", "s"), ("aa", "b", ""), ("ab", "abz", "ab")],
)
def test_range_lcp(lo, hi, expected):
    assert range_lcp(StringRange(lo, hi)) == expected


def test_dp_row_is_prefix_distances():
    row = dp_row("ab", "xaby")
    assert row == [dp_distance("ab", "xaby"[:j]) for j in range(5)]


@pytest.mark.parametrize(
    "q, lo, hi, expected",
    [("abc", "abc", "abz", 0), ("smith", "smith", "smith", 0), ("zzz", "aa", "ab", 1)],
)
def test_dst_min_examples(q, lo, hi, expected):
    assert dst_min(q, StringRange(lo, hi)) == expected


def test_dst_min_is_a_lower_bound():
    rng = np.random.default_rng(2)
    words = random_strings(rng, 200, min_len=1, max_len=7, alphabet="abcd")
    for _ in range(500):
        i, j = sorted(int(x) for x in rng.integers(0, len(words), size=2))
        q = words[int(rng.integers(0, len(words)))]
        bound = dst_min(q, StringRange(words[i], words[j]))
        assert all(bound <= edit_distance(q, s) for s in words[i:j + 1])


def test_dst_min_monotone_under_range_widening():
    rng = np.random.default_rng(3)
    words = random_strings(rng, 300, min_len=1, max_len=6, alphabet="abc")
    for _ in range(1000):
        i, j = sorted(int(x) for x in rng.integers(0, len(words), size=2))
        a = max(0, i - int(rng.integers(0, 5)))
        b = min(len(words) - 1, j + int(rng.integers(0, 5)))
        q = words[int(rng.integers(0, len(words)))]
        inner = dst_min(q, StringRange(words[i], words[j]))
        outer = dst_min(q, StringRange(words[a], words[b]))
        assert outer <= inner


def test_distance_cache_counts_each_string_once():
    cache = DistanceCache("kate")
    assert cache("katie") == 1
    assert cache("katie") == 1
    assert cache("mary") == 3
    assert cache.evaluations == 2
    assert cache.known("mary") and not cache.known("nina")
    assert cache.snapshot() == {"katie": 1, "mary": 3}
