from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from autoss.auth.evs2 import attach_dbhs
from autoss.auth.vo import ServerResponse, VerificationObject
from autoss.auth.vs2 import search, traverse
from autoss.core.config import logger
from autoss.core.errors import QueryError
from autoss.domain.metrics import DistanceCache
from autoss.domain.model import Mode, TopKQuery
from autoss.embedding.sparsemap import EmbeddingFunction
from autoss.index.mbtree import MBTree


@dataclass(frozen=True)
class TopKResult:
    """Ranked answer (at most k strings) and c, the number of theta-similar strings."""
    results: List[str]
    c: int
    distances: List[int]

    @property
    def effective_theta(self) -> Optional[float]:
        return float(self.distances[-1]) if self.distances else None


def topk_search(tree: MBTree, tq: TopKQuery) -> TopKResult:
    """theta-similar strings ranked by (DST, φ), cut at k."""
    dist = DistanceCache(tq.q)
    similar = search(tree, tq.as_query())
    ranked = sorted(similar, key=lambda s: (dist(s), s))
    top = ranked[: tq.k]
    return TopKResult(results=top, c=len(similar), distances=[dist(s) for s in top])


def topk_build_vo(
    tree: MBTree,
    tq: TopKQuery,
    mode: Mode = Mode.VS2,
    f: Optional[EmbeddingFunction] = None,
) -> ServerResponse:
    """
    When c <= k the VO is the ordinary one at theta. When c > k it is built at
    theta' = DST(q, R[k]) so that it proves every other string is at least that far.
    """
    if mode is Mode.EVS2 and f is None:
        raise QueryError("E-VS² top-k needs an embedding function")
    ranked = topk_search(tree, tq)
    theta_vo = tq.theta if ranked.c <= tq.k else ranked.effective_theta
    t = traverse(tree, tq.q, theta_vo, returned=set(ranked.results))

    if mode is Mode.EVS2:
        vo, _, _ = attach_dbhs(t, f, tq.q, theta_vo)  # type: ignore[arg-type]
    else:
        vo = VerificationObject(root=t.root)

    logger.info(
        "topk_build_vo | q={!r} k={} c={} theta_vo={} mode={}",
        tq.q,
        tq.k,
        ranked.c,
        theta_vo,
        mode.value,
    )
    return ServerResponse(
        mode=mode,
        theta=tq.theta,
        results=tuple(ranked.results),
        signature=tree.root_signature,
        vo=vo,
        k=tq.k,
    )
