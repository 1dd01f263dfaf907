from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Dict, List, Optional, Tuple

from autoss.auth.vo import (
    MF,
    ExemptNode,
    ExemptSide,
    ExemptStr,
    Group,
    ServerResponse,
    Str,
    VerificationObject,
    VOEntry,
    encode_entry,
)
from autoss.core.config import logger
from autoss.domain.metrics import DistanceCache, dst_min, phi_key
from autoss.domain.model import Mode, Query
from autoss.index.mbtree import MBNode, MBTree


@dataclass
class PrunedView:
    """
    Per-query exemptions layered over the signed tree. The tree itself is never
    changed: exempted strings and subtrees are shipped as exemption records that
    the client checks against distances it proved for an earlier query.
    """
    strings: Dict[str, ExemptStr] = field(default_factory=dict)
    nodes: Dict[bytes, int] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.strings and not self.nodes


@dataclass
class Traversal:
    """Result of one server-side pass: the VO tree plus what it was made of."""
    root: VOEntry
    results: List[str]
    c_strings: List[str]
    mfs: List[MF]
    distances: Dict[str, int]


def is_candidate(q: str, node: MBNode, theta: float) -> bool:
    return dst_min(q, node.range) <= theta


# === Search ===

def search(tree: MBTree, query: Query) -> List[str]:
    """
    Pruned depth-first search: only candidate nodes are descended into and exact
    DST is computed inside candidate leaves. R is returned in φ order.
    """
    dist = DistanceCache(query.q)
    results: List[str] = []
    stack = [tree.root]
    visited = 0
    while stack:
        node = stack.pop()
        visited += 1
        if not is_candidate(query.q, node, query.theta):
            continue
        if node.is_leaf:
            results.extend(e.text for e in node.entries if dist(e.text) <= query.theta)
        else:
            stack.extend(reversed(node.children))
    results.sort(key=phi_key)
    logger.debug("search | q={!r} theta={} visited={} hits={}", query.q, query.theta, visited, len(results))
    return results


# === VO construction ===

def traverse(
    tree: MBTree,
    q: str,
    theta: float,
    returned: Optional[AbstractSet[str]] = None,
    force_open: AbstractSet[str] = frozenset(),
    force_closed: AbstractSet[str] = frozenset(),
    view: Optional[PrunedView] = None,
) -> Traversal:
    """
    Walks the tree emitting one VO entry per visited node.

    Non-candidate nodes become MF pairs, candidate leaves become groups of Str
    entries and candidate internal nodes become groups of their children's
    entries. `returned` decides which leaf strings are reported as results
    (default: every string within theta). `force_open` expands non-candidate
    nodes covering any of its strings; `force_closed` emits the leaves holding
    its strings as MF pairs regardless of candidacy. `view` substitutes
    exemption records for exempted strings and subtrees.
    """
    dist = DistanceCache(q)
    results: List[str] = []
    c_strings: List[str] = []
    mfs: List[MF] = []

    def covers_any(node: MBNode, strings: AbstractSet[str]) -> bool:
        return any(node.range.contains(s) for s in strings)

    def as_mf(node: MBNode) -> MF:
        mf = MF(node.range, node.kids_digest)
        mfs.append(mf)
        return mf

    def visit(node: MBNode) -> VOEntry:
        if node.is_leaf and any(e.text in force_closed for e in node.entries):
            return as_mf(node)
        if not is_candidate(q, node, theta) and not covers_any(node, force_open):
            return as_mf(node)
        if view is not None and node.digest in view.nodes:
            return _maybe_exempt(node, view.nodes[node.digest])
        return _open(node)

    def _open(node: MBNode) -> Group:
        if not node.is_leaf:
            return Group(tuple(visit(c) for c in node.children))
        entries: List[VOEntry] = []
        for e in node.entries:
            s = e.text
            record = view.strings.get(s) if view is not None else None
            if record is not None:
                entries.append(record)
                if record.side is ExemptSide.SIMILAR:
                    results.append(s)
                continue
            similar = (s in returned) if returned is not None else dist(s) <= theta
            if similar:
                results.append(s)
            else:
                c_strings.append(s)
            entries.append(Str(s))
        return Group(tuple(entries))

    def _maybe_exempt(node: MBNode, pivot: int) -> VOEntry:
        marks = (len(results), len(c_strings), len(mfs))
        opened = _open(node)
        record = ExemptNode(pivot, node.digest)
        if len(encode_entry(opened)) <= len(encode_entry(record)):
            return opened
        # an exempt subtree contributes nothing to results, C-strings or MFs
        del results[marks[0]:], c_strings[marks[1]:], mfs[marks[2]:]
        return record

    root = visit(tree.root)
    return Traversal(
        root=root,
        results=sorted(results, key=phi_key),
        c_strings=c_strings,
        mfs=mfs,
        distances=dist.snapshot(),
    )


def build_vo(tree: MBTree, query: Query) -> Tuple[List[str], VerificationObject]:
    """Honest VS² answer: R in φ order and its VO."""
    t = traverse(tree, query.q, query.theta)
    logger.info(
        "build_vo | q={!r} theta={} n_R={} n_C={} n_MF={}",
        query.q,
        query.theta,
        len(t.results),
        len(t.c_strings),
        len(t.mfs),
    )
    return t.results, VerificationObject(root=t.root)


def answer(tree: MBTree, query: Query) -> ServerResponse:
    results, vo = build_vo(tree, query)
    return ServerResponse(
        mode=Mode.VS2,
        theta=query.theta,
        results=tuple(results),
        signature=tree.root_signature,
        vo=vo,
    )
