from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from autoss.core.config import app_config, logger
from autoss.core.errors import DBHConstructionError
from autoss.embedding.sparsemap import euclid


@dataclass(frozen=True)
class Hyperrect:
    """Axis-aligned box [lo, hi] in the embedded space. Point boxes are allowed."""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise DBHConstructionError("hyperrect lo/hi dimension mismatch")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise DBHConstructionError("hyperrect has lo > hi")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=np.float64)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=np.float64)

    def contains(self, p: np.ndarray) -> bool:
        if p.shape[0] != self.dim:
            return False
        return bool(np.all(self.lo_array <= p) and np.all(p <= self.hi_array))

    def overlaps(self, other: "Hyperrect") -> bool:
        """Closed-interval intersection test; touching faces count as overlap."""
        return bool(
            np.all(self.lo_array <= other.hi_array) and np.all(other.lo_array <= self.hi_array)
        )

    def envelope(self, other: "Hyperrect") -> "Hyperrect":
        return Hyperrect(
            tuple(float(v) for v in np.minimum(self.lo_array, other.lo_array)),
            tuple(float(v) for v in np.maximum(self.hi_array, other.hi_array)),
        )

    def is_within(self, other: "Hyperrect") -> bool:
        return bool(np.all(other.lo_array <= self.lo_array) and np.all(self.hi_array <= other.hi_array))


def mbh(points: Iterable[np.ndarray]) -> Hyperrect:
    arr = np.asarray(list(points), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DBHConstructionError("mbh needs at least one point of a common dimension")
    return Hyperrect(
        tuple(float(v) for v in arr.min(axis=0)),
        tuple(float(v) for v in arr.max(axis=0)),
    )


def dst_min_rect(p: np.ndarray, r: Hyperrect) -> float:
    """
    Smallest scaled distance from p to any point of r:
    sqrt(sum(m_i^2) / d) with m_i = max(lo_i - p_i, 0, p_i - hi_i).
    """
    if p.shape[0] != r.dim:
        raise DBHConstructionError(f"dimension mismatch {p.shape[0]} vs {r.dim}")
    m = np.maximum(np.maximum(r.lo_array - p, 0.0), p - r.hi_array)
    return float(np.sqrt(np.dot(m, m) / r.dim))


def is_distant(p_q: np.ndarray, r: Hyperrect, theta: float) -> bool:
    return dst_min_rect(p_q, r) > theta


# === Compatibility graph ===

def build_graph(p_q: np.ndarray, pts: Sequence[np.ndarray], theta: float) -> nx.Graph:
    """
    Vertex i per point; edge (i, j) iff the MBH of {P_i, P_j} is distant from P_q.
    Every point must itself be farther than theta from P_q.
    """
    for i, p in enumerate(pts):
        if euclid(p_q, p) <= theta:
            raise DBHConstructionError(f"FP-string passed to DBH builder (point {i})")
    graph = nx.Graph()
    graph.add_nodes_from(range(len(pts)))
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if is_distant(p_q, mbh([pts[i], pts[j]]), theta):
                graph.add_edge(i, j)
    return graph


def _greedy_cliques(
    graph: nx.Graph,
    p_q: np.ndarray,
    pts: Sequence[np.ndarray],
    theta: float,
    check_growth: bool,
) -> List[List[int]]:
    """
    Greedy clique cover. Seed: uncovered vertex of minimum degree among the
    uncovered. Growth: the candidate (adjacent to every member) with the fewest
    neighbours among the remaining uncovered non-candidates. With check_growth,
    a candidate whose addition makes the box non-distant loses its edges to the
    clique. Ties go to the lowest vertex id.
    """
    uncovered = set(graph.nodes)
    groups: List[List[int]] = []
    while uncovered:
        seed = min(uncovered, key=lambda v: (len(uncovered & set(graph.neighbors(v))), v))
        clique = [seed]
        candidates = set(graph.neighbors(seed)) & uncovered
        while candidates:
            rest = uncovered - candidates - set(clique)
            v = min(candidates, key=lambda c: (len(rest & set(graph.neighbors(c))), c))
            if check_growth and not is_distant(p_q, mbh(pts[i] for i in clique + [v]), theta):
                for u in clique:
                    graph.remove_edge(u, v)
                candidates.discard(v)
                logger.debug("partition | growth rejected | vertex={} clique_size={}", v, len(clique))
                continue
            clique.append(v)
            candidates = (candidates & set(graph.neighbors(v))) - {v}
        groups.append(sorted(clique))
        uncovered -= set(clique)
    return groups


def _split_non_distant(
    groups: List[List[int]], p_q: np.ndarray, pts: Sequence[np.ndarray], theta: float
) -> List[List[int]]:
    out: List[List[int]] = []
    for g in groups:
        if len(g) > 1 and not is_distant(p_q, mbh(pts[i] for i in g), theta):
            logger.warning("partition | non-distant group split | size={}", len(g))
            out.extend([i] for i in g)
        else:
            out.append(g)
    return out


def _resolve_overlaps(
    groups: List[List[int]], p_q: np.ndarray, pts: Sequence[np.ndarray], theta: float
) -> List[List[int]]:
    """
    Repeatedly takes the first overlapping pair: merges it when the merged box is
    still distant, otherwise breaks the smaller group into single points. If the
    step budget runs out every group becomes a single point and only coincident
    points are merged.
    """
    groups = [list(g) for g in groups]
    budget = (len(pts) + 1) ** 2
    while budget > 0:
        budget -= 1
        rects = [mbh(pts[i] for i in g) for g in groups]
        pair = _first_overlap(rects)
        if pair is None:
            return groups
        i, j = pair
        merged = rects[i].envelope(rects[j])
        if is_distant(p_q, merged, theta):
            groups[i] = sorted(groups[i] + groups[j])
            del groups[j]
        else:
            small = j if len(groups[j]) <= len(groups[i]) else i
            singles = [[v] for v in groups[small]]
            del groups[small]
            groups.extend(singles)
    logger.warning("partition | overlap budget exhausted | points={}", len(pts))
    return _merge_coincident(pts)


def _first_overlap(rects: List[Hyperrect]) -> Optional[Tuple[int, int]]:
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if rects[i].overlaps(rects[j]):
                return i, j
    return None


def _merge_coincident(pts: Sequence[np.ndarray]) -> List[List[int]]:
    by_point: dict = {}
    for i, p in enumerate(pts):
        by_point.setdefault(tuple(float(v) for v in p), []).append(i)
    return list(by_point.values())


# === Collinear special case ===

def _line_through(
    pts: Sequence[np.ndarray], tolerance: float
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Returns (anchor, unit direction) or None when all points coincide."""
    anchor = pts[0]
    far = max(pts, key=lambda p: float(np.linalg.norm(p - anchor)))
    span = far - anchor
    length = float(np.linalg.norm(span))
    if length == 0.0:
        return None
    unit = span / length
    scale = max(1.0, length)
    for i, p in enumerate(pts):
        off = p - anchor
        residual = off - np.dot(off, unit) * unit
        if float(np.linalg.norm(residual)) > tolerance * scale:
            raise DBHConstructionError(f"points are not collinear (point {i})")
    return anchor, unit


def collinear_groups(
    p_q: np.ndarray,
    pts: Sequence[np.ndarray],
    theta: float,
    tolerance: Optional[float] = None,
) -> List[List[int]]:
    """
    Points on one line L. If L is farther than theta from P_q one box covers all
    of them; otherwise the foot of the perpendicular from P_q splits them into
    two sides, one box per non-empty side. A side whose box turns out not to be
    distant is handed to the general heuristic.
    """
    tol = app_config.dbh.collinear_tolerance if tolerance is None else tolerance
    if not pts:
        return []
    for i, p in enumerate(pts):
        if euclid(p_q, p) <= theta:
            raise DBHConstructionError(f"FP-string passed to DBH builder (point {i})")
    line = _line_through(pts, tol)
    everyone = list(range(len(pts)))
    if line is None:
        return [everyone]

    anchor, unit = line
    t_foot = float(np.dot(p_q - anchor, unit))
    foot = anchor + t_foot * unit
    if euclid(p_q, foot) > theta and is_distant(p_q, mbh(pts), theta):
        return [everyone]

    left = [i for i in everyone if float(np.dot(pts[i] - anchor, unit)) < t_foot]
    right = [i for i in everyone if float(np.dot(pts[i] - anchor, unit)) >= t_foot]
    groups: List[List[int]] = []
    for side in (left, right):
        if not side:
            continue
        if is_distant(p_q, mbh(pts[i] for i in side), theta):
            groups.append(side)
            continue
        logger.debug("collinear_groups | side falls back to greedy | size={}", len(side))
        sub = [pts[i] for i in side]
        graph = build_graph(p_q, sub, theta)
        for g in _greedy_cliques(graph, p_q, sub, theta, check_growth=True):
            groups.append([side[k] for k in g])
    return groups


def collinear_partition(
    p_q: np.ndarray,
    pts: Sequence[np.ndarray],
    theta: float,
    tolerance: Optional[float] = None,
) -> List[Hyperrect]:
    return [mbh(pts[i] for i in g) for g in collinear_groups(p_q, pts, theta, tolerance)]


# === Partition ===

def partition_groups(
    p_q: np.ndarray,
    pts: Sequence[np.ndarray],
    theta: float,
) -> List[List[int]]:
    """
    Splits DBH-string points into groups whose boxes are pairwise disjoint,
    cover every point and are each farther than theta from P_q. Groups are
    returned ordered by their smallest point index.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in pts]
    if not pts:
        return []
    d = p_q.shape[0]
    if d == 1:
        groups = collinear_groups(p_q, pts, theta)
    else:
        graph = build_graph(p_q, pts, theta)
        groups = _greedy_cliques(graph, p_q, pts, theta, check_growth=d > 2)
    groups = _split_non_distant(groups, p_q, pts, theta)
    groups = _resolve_overlaps(groups, p_q, pts, theta)
    groups = sorted((sorted(g) for g in groups), key=lambda g: g[0])
    logger.debug("partition | points={} dim={} groups={}", len(pts), d, len(groups))
    return groups


def partition(p_q: np.ndarray, pts: Sequence[np.ndarray], theta: float) -> List[Hyperrect]:
    return [mbh(pts[i] for i in g) for g in partition_groups(p_q, pts, theta)]
