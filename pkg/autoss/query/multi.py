from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from autoss.auth.evs2 import attach_dbhs, build_vo_e
from autoss.auth.verifier import BundleContext, OpenedNode, reconstruct, verify_in_bundle
from autoss.auth.vo import (
    MF,
    ExemptNode,
    ExemptSide,
    ExemptStr,
    Group,
    SharedMF,
    SharedRect,
    Str,
    VerificationObject,
    VOEntry,
    encode_entry,
    encode_rect,
    encode_vo,
    iter_entries,
    leaf_entries,
    read_entry,
    read_rect,
    read_vo,
    vo_size,
)
from autoss.auth.vs2 import PrunedView, build_vo, traverse
from autoss.core.config import logger
from autoss.core.errors import QueryError, VOFormatError
from autoss.core.wire import ByteReader, f64, lp_bytes, lp_str, u8, u32
from autoss.domain.metrics import DistanceCache, dst_min, edit_distance
from autoss.domain.model import (
    Diagnosis,
    Mode,
    MultiQuery,
    StringRange,
    VerificationReport,
    VerificationStep,
)
from autoss.embedding.dbh import Hyperrect
from autoss.embedding.sparsemap import EmbeddingFunction
from autoss.index.mbtree import MBNode, MBTree
from autoss.index.signing import SignatureProvider

BUNDLE_MAGIC = b"VOB1"

# ExemptStr costs this many bytes more than the Str it replaces (pivot, side, claimed).
EXEMPTION_OVERHEAD = 9


# === Triangle pruning ===

def triangle_prune(
    dists_q1: Mapping[str, int],
    d12: int,
    theta: float,
) -> Tuple[Set[str], Set[str]]:
    """
    (skip_dissimilar, skip_similar) for q2 from distances already known for q1:
    DST(s, q1) - d12 > theta proves s dissimilar to q2, DST(s, q1) + d12 <= theta
    proves it similar.
    """
    skip_dissimilar = {s for s, d in dists_q1.items() if d - d12 > theta}
    skip_similar = {s for s, d in dists_q1.items() if d + d12 <= theta}
    return skip_dissimilar, skip_similar


def shrunk_range(tree: MBTree, node: MBNode, removed: Set[str]) -> Optional[StringRange]:
    """Range the node would have with `removed` taken out; None if nothing is left."""
    rest = [s for s in tree.strings_under(node) if s not in removed]
    if not rest:
        return None
    return StringRange(rest[0], rest[-1])


def removal_keeps_noncandidate(tree: MBTree, node: MBNode, removed: Set[str], q: str, theta: float) -> bool:
    """Removing strings from a non-candidate node never makes it a candidate."""
    if dst_min(q, node.range) <= theta:
        return True
    rng = shrunk_range(tree, node, removed)
    return rng is None or dst_min(q, rng) > theta


def prune_tree(
    tree: MBTree,
    skip_dissimilar: Mapping[str, ExemptStr],
    opened: Sequence[Mapping[bytes, OpenedNode]] = (),
    exempt_strings: Optional[Mapping[str, ExemptStr]] = None,
) -> PrunedView:
    """
    Marks the highest subtrees whose strings are all provably dissimilar through
    one pivot that also opened that subtree. `exempt_strings` are passed through
    as per-string exemption records.
    """
    view = PrunedView(strings=dict(exempt_strings) if exempt_strings else {})
    if not skip_dissimilar:
        return view

    def walk(node: MBNode) -> None:
        strings = tree.strings_under(node)
        pivots = {skip_dissimilar[s].pivot if s in skip_dissimilar else None for s in strings}
        if len(pivots) == 1:
            pivot = next(iter(pivots))
            if pivot is not None and pivot < len(opened) and node.digest in opened[pivot]:
                view.nodes[node.digest] = pivot
                return
        for child in node.children:
            walk(child)

    walk(tree.root)
    return view


# === Bundle types ===

@dataclass(frozen=True)
class BundleSection:
    results: Tuple[str, ...]
    vo: VerificationObject


@dataclass(frozen=True)
class SharedVOBundle:
    """
    Per-query (R, VO) sections plus tables of MF pairs and DBH rectangles that
    appear in more than one section. Signed root is shipped once.
    """
    mode: Mode
    theta: float
    signature: bytes
    shared_mfs: Tuple[MF, ...]
    shared_rects: Tuple[Hyperrect, ...]
    sections: Tuple[BundleSection, ...]

    def proof_bytes(self) -> int:
        """Shared records plus per-query VOs; envelope framing is not counted."""
        return (
            sum(len(encode_entry(m)) for m in self.shared_mfs)
            + sum(len(encode_rect(r)) for r in self.shared_rects)
            + sum(vo_size(s.vo) for s in self.sections)
        )

    def exemption_count(self) -> int:
        return sum(
            isinstance(e, (ExemptStr, ExemptNode))
            for s in self.sections
            for e in leaf_entries(s.vo.root)
        )


# === Server side ===

@dataclass
class _QueryProof:
    results: List[str]
    vo: VerificationObject
    proven: Dict[str, int]
    opened: Dict[bytes, OpenedNode]


def _exemption_candidates(
    q: str,
    index: int,
    queries: Sequence[str],
    proofs: Sequence[_QueryProof],
    theta: float,
) -> Tuple[Dict[str, ExemptStr], Dict[str, ExemptStr]]:
    """First earlier pivot that settles each string, split by side."""
    dissimilar: Dict[str, ExemptStr] = {}
    similar: Dict[str, ExemptStr] = {}
    for j in range(index):
        d_ij = edit_distance(q, queries[j])
        proven = proofs[j].proven
        skip_dis, skip_sim = triangle_prune(proven, d_ij, theta)
        for s in skip_dis:
            dissimilar.setdefault(s, ExemptStr(s, j, ExemptSide.DISSIMILAR, proven[s]))
        for s in skip_sim:
            similar.setdefault(s, ExemptStr(s, j, ExemptSide.SIMILAR, proven[s]))
    return dissimilar, similar


def _prove_query(
    tree: MBTree,
    f: Optional[EmbeddingFunction],
    q: str,
    theta: float,
    mode: Mode,
    view: PrunedView,
    earlier: Sequence[_QueryProof],
) -> _QueryProof:
    t = traverse(tree, q, theta, view=view)
    if mode is Mode.EVS2:
        vo, _, _ = attach_dbhs(t, f, q, theta)  # type: ignore[arg-type]
    else:
        vo = VerificationObject(root=t.root)
    rebuilt = reconstruct(
        vo.root,
        opened_by_query=[p.opened for p in earlier],
        allow_bundle_entries=True,
    )
    dist = DistanceCache(q)
    proven = {e.text: dist(e.text) for e in leaf_entries(vo.root) if isinstance(e, Str)}
    return _QueryProof(results=t.results, vo=vo, proven=proven, opened=rebuilt.opened)


def _build_pass(
    tree: MBTree,
    f: Optional[EmbeddingFunction],
    mq: MultiQuery,
    mode: Mode,
    use_nodes: bool,
    string_budget: int,
    first_pass: Optional[Sequence[_QueryProof]] = None,
) -> List[_QueryProof]:
    proofs: List[_QueryProof] = []
    budget = string_budget
    for i, q in enumerate(mq.strings):
        view = PrunedView()
        if i > 0:
            dissimilar, similar = _exemption_candidates(q, i, mq.strings, proofs, mq.theta)
            chosen: Dict[str, ExemptStr] = {}
            if budget >= EXEMPTION_OVERHEAD and first_pass is not None:
                shipped = [e.text for e in leaf_entries(first_pass[i].vo.root) if isinstance(e, Str)]
                result_set = set(first_pass[i].results)
                for s in shipped:
                    if budget < EXEMPTION_OVERHEAD:
                        break
                    record = similar.get(s) if s in result_set else dissimilar.get(s)
                    if record is not None:
                        chosen[s] = record
                        budget -= EXEMPTION_OVERHEAD
            opened = [p.opened for p in proofs]
            view = prune_tree(tree, dissimilar if use_nodes else {}, opened, chosen)
        proofs.append(_prove_query(tree, f, q, mq.theta, mode, view, proofs))
    return proofs


def _share(
    mode: Mode,
    theta: float,
    signature: bytes,
    proofs: Sequence[_QueryProof],
) -> SharedVOBundle:
    """Moves MF pairs and rectangles used by two or more queries into shared tables."""
    mf_users: Counter = Counter()
    rect_users: Counter = Counter()
    for p in proofs:
        mf_users.update({e for e in iter_entries(p.vo.root) if isinstance(e, MF)})
        rect_users.update(set(p.vo.dbhs or ()))

    mf_index: Dict[MF, int] = {}
    rect_index: Dict[Hyperrect, int] = {}
    for p in proofs:
        for e in iter_entries(p.vo.root):
            if isinstance(e, MF) and mf_users[e] > 1 and e not in mf_index:
                mf_index[e] = len(mf_index)
        for r in p.vo.dbhs or ():
            if isinstance(r, Hyperrect) and rect_users[r] > 1 and r not in rect_index:
                rect_index[r] = len(rect_index)

    def rewrite(entry: VOEntry) -> VOEntry:
        if isinstance(entry, Group):
            return Group(tuple(rewrite(e) for e in entry.entries))
        if isinstance(entry, MF) and entry in mf_index:
            return SharedMF(mf_index[entry])
        return entry

    sections = []
    for p in proofs:
        dbhs = p.vo.dbhs
        if dbhs is not None:
            dbhs = tuple(SharedRect(rect_index[r]) if r in rect_index else r for r in dbhs)
        sections.append(BundleSection(tuple(p.results), VerificationObject(rewrite(p.vo.root), dbhs)))

    return SharedVOBundle(
        mode=mode,
        theta=theta,
        signature=signature,
        shared_mfs=tuple(mf_index),
        shared_rects=tuple(rect_index),
        sections=tuple(sections),
    )


def independent_vo_bytes(
    tree: MBTree,
    mq: MultiQuery,
    mode: Mode,
    f: Optional[EmbeddingFunction] = None,
) -> int:
    total = 0
    for i in range(len(mq.strings)):
        query = mq.query(i)
        if mode is Mode.EVS2:
            _, vo = build_vo_e(tree, f, query)  # type: ignore[arg-type]
        else:
            _, vo = build_vo(tree, query)
        total += vo_size(vo)
    return total


def build_multi_vo(
    tree: MBTree,
    f: Optional[EmbeddingFunction],
    mq: MultiQuery,
    mode: Mode = Mode.VS2,
) -> SharedVOBundle:
    """
    Queries are answered in input order. Later queries reuse what earlier ones
    proved: subtrees an earlier VO opened and that are provably dissimilar are
    sent as exempt nodes, identical MF pairs and rectangles are shared, and the
    bytes saved are spent on per-string exemptions.
    """
    if mode is Mode.EVS2 and f is None:
        raise QueryError("E-VS² bundle needs an embedding function")
    baseline = independent_vo_bytes(tree, mq, mode, f)

    plain = _build_pass(tree, f, mq, mode, use_nodes=True, string_budget=0)
    bundle = _share(mode, mq.theta, tree.root_signature, plain)
    if bundle.proof_bytes() > baseline:
        plain = _build_pass(tree, f, mq, mode, use_nodes=False, string_budget=0)
        bundle = _share(mode, mq.theta, tree.root_signature, plain)

    saved = baseline - bundle.proof_bytes()
    if saved >= EXEMPTION_OVERHEAD and len(mq.strings) > 1:
        enriched = _build_pass(tree, f, mq, mode, use_nodes=True, string_budget=saved, first_pass=plain)
        candidate = _share(mode, mq.theta, tree.root_signature, enriched)
        if candidate.proof_bytes() <= baseline:
            bundle = candidate

    logger.info(
        "build_multi_vo | queries={} mode={} bundle_bytes={} independent_bytes={} shared_mf={} shared_dbh={}",
        len(mq.strings),
        mode.value,
        bundle.proof_bytes(),
        baseline,
        len(bundle.shared_mfs),
        len(bundle.shared_rects),
    )
    return bundle


# === Client side ===

def verify_multi(
    mq: MultiQuery,
    bundle: SharedVOBundle,
    public_key: bytes,
    f: Optional[EmbeddingFunction] = None,
    provider: Optional[SignatureProvider] = None,
) -> List[VerificationReport]:
    """
    Verifies the sections in order. Exemptions are checked against distances the
    client itself proved for the pivot query and query-to-query distances it
    recomputes; nothing the server claims about distances is trusted.
    """
    if len(bundle.sections) != len(mq.strings):
        detail = f"bundle has {len(bundle.sections)} sections for {len(mq.strings)} queries"
        return [
            VerificationReport(
                passed=False,
                failed_step=VerificationStep.STEP1,
                diagnosis=Diagnosis.MALFORMED_VO,
                detail=detail,
            )
            for _ in mq.strings
        ]

    reports: List[VerificationReport] = []
    proven: List[Dict[str, int]] = []
    opened: List[Dict[bytes, OpenedNode]] = []
    for i, (q, section) in enumerate(zip(mq.strings, bundle.sections)):
        ctx = BundleContext(
            index=i,
            queries=mq.strings,
            shared_mfs=bundle.shared_mfs,
            shared_rects=bundle.shared_rects,
            proven=proven,
            opened=opened,
        )
        report, proven_i, opened_i = verify_in_bundle(
            q,
            mq.theta,
            section.results,
            section.vo,
            bundle.mode,
            public_key,
            bundle.signature,
            ctx,
            f=f,
            provider=provider,
        )
        reports.append(report)
        proven.append(proven_i)
        opened.append(opened_i)
    logger.info(
        "verify_multi | queries={} passed={}",
        len(reports),
        sum(r.passed for r in reports),
    )
    return reports


# === VOB1 codec ===

_MODE_CODES = {Mode.VS2: 0, Mode.EVS2: 1}


def encode_bundle(bundle: SharedVOBundle) -> bytes:
    out = [
        BUNDLE_MAGIC,
        u8(_MODE_CODES[bundle.mode]),
        f64(bundle.theta),
        u32(len(bundle.sections)),
        lp_bytes(bundle.signature),
        u32(len(bundle.shared_mfs)),
    ]
    out.extend(encode_entry(m) for m in bundle.shared_mfs)
    out.append(u32(len(bundle.shared_rects)))
    out.extend(encode_rect(r) for r in bundle.shared_rects)
    for section in bundle.sections:
        out.append(u32(len(section.results)))
        out.extend(lp_str(s) for s in section.results)
        out.append(lp_bytes(encode_vo(section.vo)))
    return b"".join(out)


def decode_bundle(data: bytes) -> SharedVOBundle:
    reader = ByteReader(data, lambda msg, off: VOFormatError(msg, offset=off))
    if reader.raw(len(BUNDLE_MAGIC)) != BUNDLE_MAGIC:
        raise VOFormatError("bad magic, not a VOB1 bundle", offset=0)
    code = reader.u8()
    modes = {v: k for k, v in _MODE_CODES.items()}
    if code not in modes:
        raise VOFormatError(f"unknown mode code {code}", offset=reader.pos - 1)
    theta = reader.f64()
    if not math.isfinite(theta) or theta < 0:
        raise VOFormatError(f"invalid theta {theta}", offset=reader.pos - 8)
    count = reader.u32()
    signature = reader.lp_bytes()

    shared_mfs = []
    for _ in range(_bounded(reader, reader.u32())):
        start = reader.pos
        entry = read_entry(reader)
        if not isinstance(entry, MF):
            raise VOFormatError("shared table entry is not an MF pair", offset=start)
        shared_mfs.append(entry)
    shared_rects = []
    for _ in range(_bounded(reader, reader.u32())):
        dim = reader.u32()
        if dim == 0 or dim * 16 > reader.remaining():
            raise reader.fail(f"invalid shared rectangle dimension {dim}")
        shared_rects.append(read_rect(reader, dim))

    sections = []
    for _ in range(_bounded(reader, count)):
        n = _bounded(reader, reader.u32())
        results = tuple(reader.lp_str() for _ in range(n))
        size = reader.u32()
        start = reader.pos
        inner = ByteReader(reader.raw(size), lambda msg, off: VOFormatError(msg, offset=start + off))
        vo = read_vo(inner)
        inner.expect_end()
        sections.append(BundleSection(results, vo))
    reader.expect_end()
    return SharedVOBundle(
        mode=modes[code],
        theta=theta,
        signature=signature,
        shared_mfs=tuple(shared_mfs),
        shared_rects=tuple(shared_rects),
        sections=tuple(sections),
    )


def _bounded(reader: ByteReader, count: int) -> int:
    if count * 4 > reader.remaining():
        raise reader.fail(f"count {count} exceeds input")
    return count
