from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from autoss.auth.vo import DbhRef, Group, ServerResponse, Str, VerificationObject, VOEntry
from autoss.auth.vs2 import Traversal, traverse
from autoss.core.config import logger
from autoss.domain.model import Mode, Query
from autoss.embedding.dbh import Hyperrect, mbh, partition_groups
from autoss.embedding.sparsemap import EmbeddingFunction, euclid
from autoss.index.mbtree import MBTree


@dataclass
class Classification:
    """C-strings split by their embedded distance to the query point."""
    fp: List[str] = field(default_factory=list)
    ds: List[str] = field(default_factory=list)
    points: Dict[str, np.ndarray] = field(default_factory=dict)


def classify_cstrings(
    f: EmbeddingFunction,
    q: str,
    theta: float,
    c_strings: Sequence[str],
) -> Classification:
    """FP iff euclid(f(q), f(s)) <= theta, DBH-string otherwise."""
    out = Classification()
    if not c_strings:
        return out
    p_q = f.embed(q)
    for s in c_strings:
        p = f.embed(s)
        out.points[s] = p
        (out.fp if euclid(p_q, p) <= theta else out.ds).append(s)
    return out


def _relabel(entry: VOEntry, refs: Dict[str, int]) -> VOEntry:
    if isinstance(entry, Group):
        return Group(tuple(_relabel(e, refs) for e in entry.entries))
    if isinstance(entry, Str) and entry.text in refs:
        return DbhRef(entry.text, refs[entry.text])
    return entry


def attach_dbhs(
    traversal: Traversal,
    f: EmbeddingFunction,
    q: str,
    theta: float,
) -> Tuple[VerificationObject, Classification, List[Hyperrect]]:
    """
    Turns a VS² traversal into an E-VS² VO: DBH-strings are partitioned into
    distant rectangles and their Str entries become DbhRef pairs. With no
    DBH-strings no DbhSet is attached and the VO equals the VS² one.
    """
    cls = classify_cstrings(f, q, theta, traversal.c_strings)
    rects: List[Hyperrect] = []
    refs: Dict[str, int] = {}
    if cls.ds:
        p_q = f.embed(q)
        pts = [cls.points[s] for s in cls.ds]
        for idx, group in enumerate(partition_groups(p_q, pts, theta)):
            rects.append(mbh(pts[i] for i in group))
            for i in group:
                refs[cls.ds[i]] = idx
    root = _relabel(traversal.root, refs) if refs else traversal.root
    return VerificationObject(root=root, dbhs=tuple(rects) if rects else None), cls, rects


def build_vo_e(
    tree: MBTree,
    f: EmbeddingFunction,
    query: Query,
) -> Tuple[List[str], VerificationObject]:
    t = traverse(tree, query.q, query.theta)
    vo, cls, rects = attach_dbhs(t, f, query.q, query.theta)
    logger.info(
        "build_vo_e | q={!r} theta={} n_R={} n_F={} n_DS={} n_DBH={} n_MF={}",
        query.q,
        query.theta,
        len(t.results),
        len(cls.fp),
        len(cls.ds),
        len(rects),
        len(t.mfs),
    )
    return t.results, vo


def answer_e(tree: MBTree, f: EmbeddingFunction, query: Query) -> ServerResponse:
    results, vo = build_vo_e(tree, f, query)
    return ServerResponse(
        mode=Mode.EVS2,
        theta=query.theta,
        results=tuple(results),
        signature=tree.root_signature,
        vo=vo,
    )
