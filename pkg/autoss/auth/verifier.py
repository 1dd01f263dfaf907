from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from autoss.auth.vo import (
    MF,
    DbhRef,
    ExemptNode,
    ExemptSide,
    ExemptStr,
    Group,
    ServerResponse,
    SharedMF,
    SharedRect,
    Str,
    VerificationObject,
    VOEntry,
    encode_vo,
)
from autoss.core.config import logger
from autoss.domain.metrics import RANGE_BOUND_COST, DistanceCache, dst_min
from autoss.domain.model import (
    ComponentCounts,
    Counters,
    Diagnosis,
    Mode,
    Query,
    StringRange,
    TopKQuery,
    VerificationReport,
    VerificationStep,
)
from autoss.embedding.dbh import Hyperrect, dst_min_rect
from autoss.embedding.sparsemap import EmbeddingFunction
from autoss.index.digest import kids_digest, node_digest_from_parts, string_hash
from autoss.index.signing import Ed25519Provider, SignatureProvider


@dataclass(frozen=True)
class Thresholds:
    """
    accept: results must have DST <= accept. exclude: everything else must have
    DST > exclude, or DST >= exclude when inclusive (top-k ties at rank k).
    """
    accept: float
    exclude: float
    inclusive: bool = False

    def excluded(self, d: float) -> bool:
        return d >= self.exclude if self.inclusive else d > self.exclude

    @classmethod
    def plain(cls, theta: float) -> "Thresholds":
        return cls(accept=theta, exclude=theta)


@dataclass(frozen=True)
class OpenedNode:
    """A subtree whose every string was shipped as a plain Str and proven."""
    range: StringRange
    strings: Tuple[str, ...]


@dataclass
class BundleContext:
    """
    What a multi-query verification already established before checking query
    `index`: distances proven for earlier queries and the subtrees they opened.
    """
    index: int
    queries: Sequence[str]
    shared_mfs: Sequence[MF] = ()
    shared_rects: Sequence[Hyperrect] = ()
    proven: Sequence[Mapping[str, int]] = ()
    opened: Sequence[Mapping[bytes, OpenedNode]] = ()


class _Reject(Exception):
    def __init__(self, step: VerificationStep, diagnosis: Diagnosis, detail: str) -> None:
        super().__init__(detail)
        self.step = step
        self.diagnosis = diagnosis
        self.detail = detail


def _malformed(detail: str) -> _Reject:
    return _Reject(VerificationStep.STEP1, Diagnosis.MALFORMED_VO, detail)


@dataclass
class _Node:
    lo: str
    hi: str
    digest: bytes
    opened: bool
    strings: Tuple[str, ...] = ()


@dataclass
class _Item:
    """One flattened VO position: a string or a claimed range."""
    lo: str
    hi: str
    entry: VOEntry
    is_range: bool


@dataclass
class Reconstruction:
    root_digest: bytes
    items: List[_Item] = field(default_factory=list)
    opened: Dict[bytes, OpenedNode] = field(default_factory=dict)


def reconstruct(
    root: VOEntry,
    shared_mfs: Sequence[MF] = (),
    opened_by_query: Sequence[Mapping[bytes, OpenedNode]] = (),
    allow_bundle_entries: bool = False,
) -> Reconstruction:
    """
    Rebuilds node digests bottom-up from the group structure and flattens the VO
    into ordered items. Groups of strings are leaves, groups of groups/ranges are
    internal nodes. Structural problems raise _Reject at step 1.
    """
    out = Reconstruction(root_digest=b"")

    def string_text(e: VOEntry) -> str:
        return e.text  # type: ignore[union-attr]

    def walk(entry: VOEntry) -> _Node:
        if isinstance(entry, (SharedMF, ExemptNode, ExemptStr)) and not allow_bundle_entries:
            raise _malformed(f"{type(entry).__name__} outside a bundle")
        if isinstance(entry, SharedMF):
            if entry.index >= len(shared_mfs):
                raise _malformed(f"dangling shared MF index {entry.index}")
            entry = shared_mfs[entry.index]
        if isinstance(entry, MF):
            rng = entry.range
            if not rng.is_valid():
                raise _malformed("MF range with lo > hi")
            out.items.append(_Item(rng.lo, rng.hi, entry, True))
            return _Node(rng.lo, rng.hi, node_digest_from_parts(rng.lo, rng.hi, entry.kids_digest), False)
        if isinstance(entry, ExemptNode):
            table = opened_by_query[entry.pivot] if entry.pivot < len(opened_by_query) else {}
            node = table.get(entry.digest)
            if node is None:
                raise _Reject(
                    VerificationStep.STEP1,
                    Diagnosis.UNVERIFIED_EXEMPTION,
                    f"exempt subtree not opened by query {entry.pivot}",
                )
            out.items.append(_Item(node.range.lo, node.range.hi, entry, True))
            return _Node(node.range.lo, node.range.hi, entry.digest, False)
        if not isinstance(entry, Group):
            raise _malformed(f"{type(entry).__name__} outside a group")
        if not entry.entries:
            raise _malformed("empty group")

        kinds = {isinstance(e, (Str, DbhRef, ExemptStr)) for e in entry.entries}
        if len(kinds) != 1:
            raise _malformed("group mixes strings and subtrees")
        if kinds == {True}:
            texts = tuple(string_text(e) for e in entry.entries)
            for e in entry.entries:
                out.items.append(_Item(e.text, e.text, e, False))  # type: ignore[union-attr]
            kids = kids_digest(string_hash(t) for t in texts)
            digest = node_digest_from_parts(texts[0], texts[-1], kids)
            is_open = all(isinstance(e, Str) for e in entry.entries)
            node = _Node(texts[0], texts[-1], digest, is_open, texts if is_open else ())
        else:
            children = [walk(e) for e in entry.entries]
            kids = kids_digest(c.digest for c in children)
            lo, hi = children[0].lo, children[-1].hi
            digest = node_digest_from_parts(lo, hi, kids)
            is_open = all(c.opened for c in children)
            strings = tuple(s for c in children for s in c.strings) if is_open else ()
            node = _Node(lo, hi, digest, is_open, strings)
        if node.opened:
            out.opened[node.digest] = OpenedNode(StringRange(node.lo, node.hi), node.strings)
        return node

    if isinstance(root, (Str, DbhRef, ExemptStr)):
        raise _malformed("VO root is a bare string")
    out.root_digest = walk(root).digest
    return out


# === Verification run ===

class _Run:
    def __init__(
        self,
        q: str,
        thresholds: Thresholds,
        results: Sequence[str],
        vo: VerificationObject,
        mode: Mode,
        public_key: bytes,
        signature: bytes,
        provider: SignatureProvider,
        f: Optional[EmbeddingFunction] = None,
        k: int = 0,
        bundle: Optional[BundleContext] = None,
    ) -> None:
        self.q = q
        self.th = thresholds
        self.results = list(results)
        self.vo = vo
        self.mode = mode
        self.public_key = public_key
        self.signature = signature
        self.provider = provider
        self.f = f
        self.k = k
        self.bundle = bundle

        self.counters = Counters()
        self.components = ComponentCounts()
        self.dist = DistanceCache(q)
        self.rebuilt: Optional[Reconstruction] = None
        self.strings: Dict[str, VOEntry] = {}
        self.rects: List[Hyperrect] = []
        self.proven: Dict[str, int] = {}
        self._points: Dict[str, np.ndarray] = {}
        self._range_edit_ops = 0

    # --- driver ---

    def execute(self) -> VerificationReport:
        report = VerificationReport(passed=True)
        try:
            self.step1()
            self.step2()
            self.step3()
            if self.mode is Mode.EVS2:
                self.step4()
        except _Reject as rej:
            report = VerificationReport(
                passed=False,
                failed_step=rej.step,
                diagnosis=rej.diagnosis,
                detail=rej.detail,
            )
        self.counters.edit_ops = self.dist.evaluations + self._range_edit_ops
        try:
            self.counters.vo_bytes = len(encode_vo(self.vo))
        except (TypeError, ValueError):
            self.counters.vo_bytes = 0
        report.counters = self.counters
        report.components = self.components
        return report

    # --- step 1: structure, order, result placement ---

    def step1(self) -> None:
        if self.mode is Mode.EVS2 and self.f is None:
            raise _malformed("E-VS² verification needs the embedding function")
        in_bundle = self.bundle is not None
        self.rebuilt = reconstruct(
            self.vo.root,
            shared_mfs=self.bundle.shared_mfs if in_bundle else (),
            opened_by_query=self.bundle.opened[: self.bundle.index] if in_bundle else (),
            allow_bundle_entries=in_bundle,
        )
        self._resolve_rects()

        items = self.rebuilt.items
        for prev, cur in zip(items, items[1:]):
            if prev.hi >= cur.lo:
                if prev.is_range or cur.is_range:
                    raise _Reject(
                        VerificationStep.STEP1,
                        Diagnosis.OVERLAP_RANGE,
                        f"range [{prev.lo!r}, {prev.hi!r}] overlaps [{cur.lo!r}, {cur.hi!r}]",
                    )
                raise _malformed(f"strings out of order: {prev.lo!r} then {cur.lo!r}")

        for item in items:
            if item.is_range:
                continue
            entry = item.entry
            if isinstance(entry, DbhRef):
                if self.mode is not Mode.EVS2:
                    raise _malformed("DbhRef in a VS² VO")
                if entry.dbh_index >= len(self.rects):
                    raise _malformed(f"DbhRef index {entry.dbh_index} out of range")
            if isinstance(entry, ExemptStr) and entry.pivot >= self.bundle.index:  # type: ignore[union-attr]
                raise _Reject(
                    VerificationStep.STEP1,
                    Diagnosis.UNVERIFIED_EXEMPTION,
                    f"exemption for {entry.text!r} cites a pivot not yet verified",
                )
            self.strings[item.lo] = entry

        if len(set(self.results)) != len(self.results):
            raise _malformed("duplicate strings in the result")
        ranges = [i for i in items if i.is_range]
        starts = [i.lo for i in ranges]
        for s in self.results:
            if s in self.strings:
                continue
            pos = bisect.bisect_right(starts, s) - 1
            if pos >= 0 and ranges[pos].lo <= s <= ranges[pos].hi:
                raise _Reject(
                    VerificationStep.STEP1,
                    Diagnosis.STRING_IN_NC_RANGE,
                    f"result {s!r} lies inside claimed non-candidate range "
                    f"[{ranges[pos].lo!r}, {ranges[pos].hi!r}]",
                )
            raise _Reject(VerificationStep.STEP1, Diagnosis.TAMPERED, f"result {s!r} is not covered by the VO")

    def _resolve_rects(self) -> None:
        if self.mode is not Mode.EVS2:
            if self.vo.dbhs:
                raise _malformed("DbhSet in a VS² VO")
            return
        shared = self.bundle.shared_rects if self.bundle is not None else ()
        for item in self.vo.dbhs or ():
            if isinstance(item, SharedRect):
                if self.bundle is None or item.index >= len(shared):
                    raise _malformed(f"dangling shared rectangle index {item.index}")
                item = shared[item.index]
            if item.dim != self.f.dim:  # type: ignore[union-attr]
                raise _malformed(f"rectangle dimension {item.dim} != embedding dimension {self.f.dim}")  # type: ignore[union-attr]
            self.rects.append(item)

    # --- step 2: root digest and signature ---

    def step2(self) -> None:
        if not self.provider.is_well_formed(self.signature):
            raise _Reject(
                VerificationStep.STEP2,
                Diagnosis.SIGNATURE_MISMATCH,
                f"signature is not a well-formed {self.provider.name} signature",
            )
        if not self.provider.verify(self.rebuilt.root_digest, self.signature, self.public_key):  # type: ignore[union-attr]
            raise _Reject(
                VerificationStep.STEP2,
                Diagnosis.TAMPERED,
                "recomputed root digest does not match the owner's signature",
            )

    # --- step 3: distances ---

    def step3(self) -> None:
        result_set = set(self.results)
        if self.k and len(self.results) > self.k:
            raise _Reject(
                VerificationStep.STEP3,
                Diagnosis.MISORDERED,
                f"{len(self.results)} results returned for k={self.k}",
            )

        for s in self.results:
            if isinstance(self.strings[s], ExemptStr):
                continue
            d = self.dist(s)
            if d > self.th.accept:
                raise _Reject(
                    VerificationStep.STEP3,
                    Diagnosis.DISSIMILAR_RETURNED,
                    f"result {s!r} has DST {d} > {self.th.accept}",
                )

        non_returned = [s for s, e in self.strings.items() if isinstance(e, Str) and s not in result_set]
        for s in non_returned:
            d = self.dist(s)
            if not self.th.excluded(d):
                raise _Reject(
                    VerificationStep.STEP3,
                    Diagnosis.SIMILAR_MISSING,
                    f"{s!r} has DST {d} but was not returned",
                )

        mfs = [i for i in self.rebuilt.items if isinstance(i.entry, MF)]  # type: ignore[union-attr]
        for item in mfs:
            self._range_edit_ops += RANGE_BOUND_COST
            bound = dst_min(self.q, StringRange(item.lo, item.hi))
            if not self.th.excluded(bound):
                raise _Reject(
                    VerificationStep.STEP3,
                    Diagnosis.CANDIDATE_CLAIMED_NC,
                    f"range [{item.lo!r}, {item.hi!r}] has DST_min {bound}",
                )

        if self.bundle is not None:
            self._check_exemptions(result_set)

        self.proven = {s: self.dist(s) for s, e in self.strings.items() if isinstance(e, Str)}

        if self.k:
            keys = [(self.dist(s), s) for s in self.results]
            for a, b in zip(keys, keys[1:]):
                if a >= b:
                    raise _Reject(
                        VerificationStep.STEP3,
                        Diagnosis.MISORDERED,
                        f"{a[1]!r} (DST {a[0]}) ranked before {b[1]!r} (DST {b[0]})",
                    )

        n_str = len(non_returned)
        self.components.n_R = len(self.results)
        self.components.n_MF = len(mfs)
        if self.mode is Mode.EVS2:
            self.components.n_F = n_str
            self.components.n_DS = sum(isinstance(e, DbhRef) for e in self.strings.values())
            self.components.n_C = n_str + self.components.n_DS
            self.components.n_DBH = len(self.rects)
        else:
            self.components.n_C = n_str

    def _check_exemptions(self, result_set: set) -> None:
        bundle = self.bundle
        pair = {}

        def d_to(pivot: int) -> int:
            if pivot not in pair:
                pair[pivot] = self.dist(bundle.queries[pivot])  # type: ignore[union-attr]
            return pair[pivot]

        def forged(detail: str) -> _Reject:
            return _Reject(VerificationStep.STEP3, Diagnosis.FORGED_EXEMPTION, detail)

        for s, e in self.strings.items():
            if not isinstance(e, ExemptStr):
                continue
            known = bundle.proven[e.pivot]  # type: ignore[union-attr]
            if s not in known:
                raise _Reject(
                    VerificationStep.STEP3,
                    Diagnosis.UNVERIFIED_EXEMPTION,
                    f"DST({s!r}, query {e.pivot}) was never proven",
                )
            if known[s] != e.claimed:
                raise forged(f"claimed DST {e.claimed} for {s!r}, proven {known[s]}")
            if e.side is ExemptSide.DISSIMILAR:
                if s in result_set or not known[s] - d_to(e.pivot) > self.th.exclude:
                    raise forged(f"{s!r} is not provably dissimilar via query {e.pivot}")
            else:
                if not known[s] + d_to(e.pivot) <= self.th.accept:
                    raise forged(f"{s!r} is not provably similar via query {e.pivot}")
                if s not in result_set:
                    raise _Reject(
                        VerificationStep.STEP3,
                        Diagnosis.SIMILAR_MISSING,
                        f"{s!r} is provably similar but was not returned",
                    )

        for item in self.rebuilt.items:  # type: ignore[union-attr]
            if not isinstance(item.entry, ExemptNode):
                continue
            pivot = item.entry.pivot
            known = bundle.proven[pivot]  # type: ignore[union-attr]
            node = bundle.opened[pivot][item.entry.digest]  # type: ignore[union-attr]
            for s in node.strings:
                if s not in known:
                    raise _Reject(
                        VerificationStep.STEP3,
                        Diagnosis.UNVERIFIED_EXEMPTION,
                        f"DST({s!r}, query {pivot}) was never proven",
                    )
                if not known[s] - d_to(pivot) > self.th.exclude:
                    raise forged(f"exempt subtree holds {s!r}, not provably dissimilar")

    # --- step 4: embedded-space checks ---

    def _point(self, s: str) -> np.ndarray:
        p = self._points.get(s)
        if p is None:
            p = self.f.embed(s)  # type: ignore[union-attr]
            self._points[s] = p
            self.counters.embed_ops += 1
        return p

    def step4(self) -> None:
        p_q = self._point(self.q)
        for s, e in self.strings.items():
            if isinstance(e, DbhRef) and not self.rects[e.dbh_index].contains(self._point(s)):
                raise _Reject(
                    VerificationStep.STEP4,
                    Diagnosis.POINT_NOT_IN_CLAIMED_DBH,
                    f"f({s!r}) is outside rectangle {e.dbh_index}",
                )
        for idx, rect in enumerate(self.rects):
            self.counters.euclid_ops += 1
            gap = dst_min_rect(p_q, rect)
            if not gap > self.th.exclude:
                raise _Reject(
                    VerificationStep.STEP4,
                    Diagnosis.DBH_NOT_DISTANT,
                    f"rectangle {idx} is at distance {gap} <= {self.th.exclude}",
                )
        # Cannot fire after step 3 when f is contractive: a result inside a distant
        # rectangle would be farther than theta. Only a non-contractive f reaches it.
        for s in self.results:
            p = self._point(s)
            for idx, rect in enumerate(self.rects):
                if rect.contains(p):
                    raise _Reject(
                        VerificationStep.STEP4,
                        Diagnosis.SIMILAR_INSIDE_DBH,
                        f"result {s!r} lies inside rectangle {idx}",
                    )


# === Public entry points ===

def _finish(name: str, q: str, report: VerificationReport) -> VerificationReport:
    log = logger.info if report.passed else logger.warning
    log(
        "{} | q={!r} verdict={} edit_ops={} euclid_ops={}",
        name,
        q,
        report.summary(),
        report.counters.edit_ops,
        report.counters.euclid_ops,
    )
    return report


def verify(
    query: Query,
    results: Sequence[str],
    vo: VerificationObject,
    public_key: bytes,
    signature: bytes,
    provider: Optional[SignatureProvider] = None,
) -> VerificationReport:
    """Three-step VS² check of (R, VO) against the owner's signed root."""
    run = _Run(
        query.q,
        Thresholds.plain(query.theta),
        results,
        vo,
        Mode.VS2,
        public_key,
        signature,
        provider or Ed25519Provider(),
    )
    return _finish("verify", query.q, run.execute())


def verify_e(
    query: Query,
    results: Sequence[str],
    vo: VerificationObject,
    f: EmbeddingFunction,
    public_key: bytes,
    signature: bytes,
    provider: Optional[SignatureProvider] = None,
) -> VerificationReport:
    """Four-step E-VS² check; DBH-strings are cleared in the embedded space."""
    run = _Run(
        query.q,
        Thresholds.plain(query.theta),
        results,
        vo,
        Mode.EVS2,
        public_key,
        signature,
        provider or Ed25519Provider(),
        f=f,
    )
    return _finish("verify_e", query.q, run.execute())


def topk_thresholds(tq: TopKQuery, results: Sequence[str]) -> Thresholds:
    """
    With k results the VO was built at theta' = DST(q, R[k]) and strings tied at
    theta' are legal non-returns. With fewer than k the VO is at theta.
    """
    if results and len(results) == tq.k:
        last = DistanceCache(tq.q)(results[-1])
        if last <= tq.theta:
            return Thresholds(accept=tq.theta, exclude=last, inclusive=True)
    return Thresholds.plain(tq.theta)


def topk_verify(
    tq: TopKQuery,
    results: Sequence[str],
    vo: VerificationObject,
    public_key: bytes,
    signature: bytes,
    mode: Mode = Mode.VS2,
    f: Optional[EmbeddingFunction] = None,
    provider: Optional[SignatureProvider] = None,
) -> VerificationReport:
    run = _Run(
        tq.q,
        topk_thresholds(tq, results),
        results,
        vo,
        mode,
        public_key,
        signature,
        provider or Ed25519Provider(),
        f=f,
        k=tq.k,
    )
    return _finish("topk_verify", tq.q, run.execute())


def verify_response(
    q: str,
    theta: float,
    response: ServerResponse,
    public_key: bytes,
    *,
    k: int,
    f: Optional[EmbeddingFunction] = None,
    provider: Optional[SignatureProvider] = None,
) -> VerificationReport:
    """
    Checks a decoded server response with the client's own q, theta and k.

    k=0 asks for a range answer. The k carried in the response is not signed,
    so it only has to agree with the client's k and is never used in its place.
    """
    if response.k != k:
        return VerificationReport(
            passed=False,
            failed_step=VerificationStep.STEP1,
            diagnosis=Diagnosis.MALFORMED_VO,
            detail=f"response answers k={response.k} but the client asked for k={k}",
        )
    if k:
        return topk_verify(
            TopKQuery(q, k, theta),
            response.results,
            response.vo,
            public_key,
            response.signature,
            mode=response.mode,
            f=f,
            provider=provider,
        )
    if response.mode is Mode.EVS2:
        if f is None:
            return VerificationReport(
                passed=False,
                failed_step=VerificationStep.STEP1,
                diagnosis=Diagnosis.MALFORMED_VO,
                detail="E-VS² response but no embedding function supplied",
            )
        return verify_e(Query(q, theta), response.results, response.vo, f, public_key, response.signature, provider)
    return verify(Query(q, theta), response.results, response.vo, public_key, response.signature, provider)


def verify_in_bundle(
    q: str,
    theta: float,
    results: Sequence[str],
    vo: VerificationObject,
    mode: Mode,
    public_key: bytes,
    signature: bytes,
    bundle: BundleContext,
    f: Optional[EmbeddingFunction] = None,
    provider: Optional[SignatureProvider] = None,
) -> Tuple[VerificationReport, Dict[str, int], Dict[bytes, OpenedNode]]:
    """
    One query of a bundle. Returns the report plus the distances this query
    proved and the subtrees it opened, for use by later queries.
    """
    run = _Run(
        q,
        Thresholds.plain(theta),
        results,
        vo,
        mode,
        public_key,
        signature,
        provider or Ed25519Provider(),
        f=f,
        bundle=bundle,
    )
    report = run.execute()
    if not report.passed:
        return report, {}, {}
    return report, run.proven, run.rebuilt.opened  # type: ignore[union-attr]
