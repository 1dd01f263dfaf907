from __future__ import annotations

from enum import Enum
from typing import Dict, Iterable, List

from Levenshtein import distance as _lev_distance

from autoss.domain.model import StringRange

# A range lower bound is charged as two DP evaluations, one per range endpoint.
RANGE_BOUND_COST = 2


class Ordering(int, Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over Unicode scalar values."""
    return _lev_distance(a, b)


def compare(a: str, b: str) -> Ordering:
    """
    φ: dictionary order by code point, a proper prefix sorts first. Python's str
    comparison is exactly this order.
    """
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


def phi_key(s: str) -> str:
    return s


def sort_corpus(strings: Iterable[str]) -> List[str]:
    return sorted(strings, key=phi_key)


def range_lcp(r: StringRange) -> str:
    """
    Longest common prefix of the range endpoints. Every string between lo and hi
    under φ starts with it.
    """
    lo, hi = r.lo, r.hi
    n = min(len(lo), len(hi))
    i = 0
    while i < n and lo[i] == hi[i]:
        i += 1
    return lo[:i]


def dp_row(p: str, q: str) -> List[int]:
    """Final row of the edit-distance table of p vs q: [DST(p, q[:j]) for j in 0..|q|]."""
    row = list(range(len(q) + 1))
    for i, pc in enumerate(p, start=1):
        prev_diag = row[0]
        row[0] = i
        for j, qc in enumerate(q, start=1):
            cur = row[j]
            if pc == qc:
                row[j] = prev_diag
            else:
                row[j] = 1 + min(prev_diag, cur, row[j - 1])
            prev_diag = cur
    return row


def dst_min(q: str, r: StringRange) -> int:
    """
    Lower bound on DST(q, s) for every s in r. Any s in r is p + t with p the
    range LCP, and an optimal alignment of q with s splits q into a part aligned
    with p and a rest, so DST(q, s) >= min_j DST(p, q[:j]).
    """
    return min(dp_row(range_lcp(r), q))


class DistanceCache:
    """Memoizes DST(q, s) for one query string and counts the real evaluations."""

    def __init__(self, q: str) -> None:
        self.q = q
        self.evaluations = 0
        self._cache: Dict[str, int] = {}

    def __call__(self, s: str) -> int:
        d = self._cache.get(s)
        if d is None:
            d = edit_distance(self.q, s)
            self._cache[s] = d
            self.evaluations += 1
        return d

    def known(self, s: str) -> bool:
        return s in self._cache

    def snapshot(self) -> Dict[str, int]:
        return dict(self._cache)
