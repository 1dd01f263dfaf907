"""Independent oracles and corpus generators for the test suite."""
from __future__ import annotations

import hashlib
import itertools
import struct
from typing import Iterable, List, Sequence

import numpy as np

from autoss.domain.model import CorpusString

ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def dp_distance(a: str, b: str) -> int:
    """Full-table Levenshtein."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        table[i][0] = i
    for j in range(len(b) + 1):
        table[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1, table[i - 1][j - 1] + cost)
    return table[len(a)][len(b)]


def random_strings(
    rng: np.random.Generator,
    n: int,
    min_len: int = 3,
    max_len: int = 13,
    alphabet: str = ALPHABET,
) -> List[str]:
    out: set = set()
    while len(out) < n:
        length = int(rng.integers(min_len, max_len + 1))
        out.add("".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length)))
    return sorted(out)


def as_corpus(strings: Iterable[str]) -> List[CorpusString]:
    return [CorpusString(id=i, text=s) for i, s in enumerate(sorted(set(strings)))]


def brute_force(texts: Sequence[str], q: str, theta: float) -> List[str]:
    return sorted(s for s in texts if dp_distance(q, s) <= theta)


def brute_force_topk(texts: Sequence[str], q: str, theta: float, k: int) -> List[str]:
    ranked = sorted((dp_distance(q, s), s) for s in texts if dp_distance(q, s) <= theta)
    return [s for _, s in ranked[:k]]


# --- hash framing, written out by hand ---

def h_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return hashlib.sha256(b"\x00" + struct.pack(">I", len(raw)) + raw).digest()


def h_kids(children: Sequence[bytes]) -> bytes:
    return hashlib.sha256(b"\x01" + b"".join(children)).digest()


def h_node(lo: str, hi: str, kids: bytes) -> bytes:
    return hashlib.sha256(b"\x02" + h_str(lo) + h_str(hi) + kids).digest()


# --- exhaustive clique partition ---

def set_partitions(items: List[int]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def min_clique_partition(n: int, edges: set) -> int:
    def is_clique(block: List[int]) -> bool:
        return all((a, b) in edges or (b, a) in edges for a, b in itertools.combinations(block, 2))

    return min(len(p) for p in set_partitions(list(range(n))) if all(is_clique(b) for b in p))
