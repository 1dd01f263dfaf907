from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autoss.auth.evs2 import attach_dbhs
from autoss.auth.vo import (
    MF,
    TAG_STR,
    DbhRef,
    Group,
    ServerResponse,
    Str,
    VerificationObject,
    VOEntry,
    decode_vo,
    encode_vo,
    leaf_entries,
)
from autoss.auth.vs2 import traverse
from autoss.core.config import logger
from autoss.core.errors import AttackNotApplicable
from autoss.core.wire import lp_str, u8
from autoss.domain.metrics import phi_key
from autoss.domain.model import Diagnosis, Mode, StringRange, VerificationStep
from autoss.embedding.dbh import Hyperrect, mbh
from autoss.embedding.sparsemap import EmbeddingFunction
from autoss.index.mbtree import MBTree


class AttackKind(str, Enum):
    TAMPER_STRING = "tamper_string"
    ADD_FALSE_HITS_V1 = "add_false_hits_v1"
    ADD_FALSE_HITS_V2 = "add_false_hits_v2"
    DROP_SIMILAR_V1 = "drop_similar_v1"
    DROP_SIMILAR_V2 = "drop_similar_v2"
    DBH_RELABEL = "dbh_relabel"
    MF_RANGE_SHIFT = "mf_range_shift"
    REORDER_TOPK = "reorder_topk"
    TRUNCATE_TOPK = "truncate_topk"


class VictimCategory(str, Enum):
    RESULT = "result"
    C_STRING = "c_string"
    FP_STRING = "fp_string"
    DS_STRING = "ds_string"
    NC_STRING = "nc_string"
    MF = "mf"
    RANKING = "ranking"


TOPK_KINDS = frozenset({AttackKind.REORDER_TOPK, AttackKind.TRUNCATE_TOPK})

Expectation = Tuple[VerificationStep, Diagnosis]

# (kind, victim category) -> the check that must catch it.
EXPECTED: Dict[Tuple[AttackKind, VictimCategory], Expectation] = {
    (AttackKind.TAMPER_STRING, VictimCategory.RESULT): (VerificationStep.STEP2, Diagnosis.TAMPERED),
    (AttackKind.TAMPER_STRING, VictimCategory.C_STRING): (VerificationStep.STEP2, Diagnosis.TAMPERED),
    (AttackKind.TAMPER_STRING, VictimCategory.FP_STRING): (VerificationStep.STEP2, Diagnosis.TAMPERED),
    (AttackKind.ADD_FALSE_HITS_V1, VictimCategory.NC_STRING): (
        VerificationStep.STEP1,
        Diagnosis.STRING_IN_NC_RANGE,
    ),
    (AttackKind.ADD_FALSE_HITS_V1, VictimCategory.C_STRING): (
        VerificationStep.STEP3,
        Diagnosis.DISSIMILAR_RETURNED,
    ),
    (AttackKind.ADD_FALSE_HITS_V1, VictimCategory.FP_STRING): (
        VerificationStep.STEP3,
        Diagnosis.DISSIMILAR_RETURNED,
    ),
    (AttackKind.ADD_FALSE_HITS_V1, VictimCategory.DS_STRING): (
        VerificationStep.STEP3,
        Diagnosis.DISSIMILAR_RETURNED,
    ),
    (AttackKind.ADD_FALSE_HITS_V2, VictimCategory.NC_STRING): (
        VerificationStep.STEP3,
        Diagnosis.DISSIMILAR_RETURNED,
    ),
    (AttackKind.DROP_SIMILAR_V1, VictimCategory.RESULT): (VerificationStep.STEP3, Diagnosis.SIMILAR_MISSING),
    (AttackKind.DROP_SIMILAR_V2, VictimCategory.RESULT): (
        VerificationStep.STEP3,
        Diagnosis.CANDIDATE_CLAIMED_NC,
    ),
    (AttackKind.DBH_RELABEL, VictimCategory.RESULT): (VerificationStep.STEP4, Diagnosis.DBH_NOT_DISTANT),
    (AttackKind.MF_RANGE_SHIFT, VictimCategory.MF): (VerificationStep.STEP2, Diagnosis.TAMPERED),
    (AttackKind.REORDER_TOPK, VictimCategory.RANKING): (VerificationStep.STEP3, Diagnosis.MISORDERED),
    (AttackKind.TRUNCATE_TOPK, VictimCategory.RANKING): (VerificationStep.STEP3, Diagnosis.SIMILAR_MISSING),
}


def categories_for(kind: AttackKind, mode: Mode) -> List[VictimCategory]:
    """Victim categories the kind is defined for under the given mode."""
    out = [cat for (k, cat) in EXPECTED if k is kind]
    if mode is Mode.VS2:
        out = [c for c in out if c not in (VictimCategory.FP_STRING, VictimCategory.DS_STRING)]
        if kind is AttackKind.DBH_RELABEL:
            return []
    else:
        out = [c for c in out if c is not VictimCategory.C_STRING]
    return out


class AttackSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: AttackKind
    seed: int = 0
    count: int = Field(default=1, ge=1)
    victim: Optional[VictimCategory] = None


@dataclass(frozen=True)
class AttackOutcome:
    """The cheating server's message and the failure it must trigger."""
    response: ServerResponse
    kind: AttackKind
    category: VictimCategory
    victims: Tuple[str, ...]
    expected_step: VerificationStep
    expected_diagnosis: Diagnosis


@dataclass
class AttackContext:
    """What the adversarial server knows: its tree, the embedding and the query."""
    tree: MBTree
    q: str
    theta: float
    f: Optional[EmbeddingFunction] = None


# === Victim pools ===

def _victim_pools(ctx: AttackContext, honest: ServerResponse) -> Dict[VictimCategory, List[str]]:
    result_set = set(honest.results)
    pools: Dict[VictimCategory, List[str]] = {c: [] for c in VictimCategory}
    texts = ctx.tree.texts()
    for e in leaf_entries(honest.vo.root):
        if isinstance(e, Str):
            if e.text in result_set:
                pools[VictimCategory.RESULT].append(e.text)
            elif honest.mode is Mode.EVS2:
                pools[VictimCategory.FP_STRING].append(e.text)
            else:
                pools[VictimCategory.C_STRING].append(e.text)
        elif isinstance(e, DbhRef):
            pools[VictimCategory.DS_STRING].append(e.text)
        elif isinstance(e, MF):
            pools[VictimCategory.MF].append(e.range.lo)
            lo = bisect.bisect_left(texts, e.range.lo)
            hi = bisect.bisect_right(texts, e.range.hi)
            pools[VictimCategory.NC_STRING].extend(texts[lo:hi])
    if honest.k and len(honest.results) >= 1:
        pools[VictimCategory.RANKING] = list(honest.results)
    return pools


def _pick(pool: Sequence[str], spec: AttackSpec) -> List[str]:
    rng = np.random.default_rng(spec.seed)
    size = min(spec.count, len(pool))
    picked = rng.choice(len(pool), size=size, replace=False)
    return [pool[int(i)] for i in sorted(picked)]


# === Transformations ===

def _rebuilt(
    ctx: AttackContext,
    honest: ServerResponse,
    results: Sequence[str],
    force_open: frozenset = frozenset(),
    force_closed: frozenset = frozenset(),
) -> ServerResponse:
    t = traverse(
        ctx.tree,
        ctx.q,
        ctx.theta,
        returned=set(results),
        force_open=force_open,
        force_closed=force_closed,
    )
    if honest.mode is Mode.EVS2:
        vo, _, _ = attach_dbhs(t, ctx.f, ctx.q, ctx.theta)  # type: ignore[arg-type]
    else:
        vo = VerificationObject(root=t.root)
    return ServerResponse(honest.mode, honest.theta, tuple(t.results), honest.signature, vo, honest.k)


def _with(honest: ServerResponse, results: Sequence[str], vo: Optional[VerificationObject] = None) -> ServerResponse:
    return ServerResponse(honest.mode, honest.theta, tuple(results), honest.signature, vo or honest.vo, honest.k)


def _tamper_bytes(honest: ServerResponse, victims: Sequence[str]) -> ServerResponse:
    raw = encode_vo(honest.vo)
    results = list(honest.results)
    for s in victims:
        old = u8(TAG_STR) + lp_str(s)
        if old not in raw:
            raise AttackNotApplicable(f"no Str entry for {s!r}")
        raw = raw.replace(old, u8(TAG_STR) + lp_str(s + "\x00"), 1)
        results = [r + "\x00" if r == s else r for r in results]
    return _with(honest, results, decode_vo(raw))


def _relabel_into_dbh(ctx: AttackContext, honest: ServerResponse, victims: Sequence[str]) -> ServerResponse:
    """Hides results as DBH-strings of rectangle 0, stretched to contain them."""
    f = ctx.f
    if f is None:
        raise AttackNotApplicable("dbh_relabel needs the embedding function")
    rects: List[Hyperrect] = [r for r in honest.vo.dbhs or () if isinstance(r, Hyperrect)]
    stretched = mbh(f.embed(s) for s in victims)
    rects = [rects[0].envelope(stretched)] + rects[1:] if rects else [stretched]
    hidden = set(victims)

    def swap(entry: VOEntry) -> VOEntry:
        if isinstance(entry, Group):
            return Group(tuple(swap(e) for e in entry.entries))
        if isinstance(entry, Str) and entry.text in hidden:
            return DbhRef(entry.text, 0)
        return entry

    vo = VerificationObject(root=swap(honest.vo.root), dbhs=tuple(rects))
    return _with(honest, [r for r in honest.results if r not in hidden], vo)


def _shift_ranges(honest: ServerResponse, victims: Sequence[str]) -> ServerResponse:
    targets = set(victims)

    def shift(entry: VOEntry) -> VOEntry:
        if isinstance(entry, Group):
            return Group(tuple(shift(e) for e in entry.entries))
        if isinstance(entry, MF) and entry.range.lo in targets:
            lo, hi = entry.range.lo, entry.range.hi
            moved = StringRange(lo + "\x00", hi) if lo < hi else StringRange(lo, hi + "\x00")
            return MF(moved, entry.kids_digest)
        return entry

    return _with(honest, honest.results, VerificationObject(shift(honest.vo.root), honest.vo.dbhs))


def _leaf_mates(tree: MBTree, victims: Sequence[str]) -> set:
    mates = set()
    for s in victims:
        leaf = tree.leaf_of(s)
        if leaf is not None:
            mates.update(e.text for e in leaf.entries)
    return mates


def apply_attack(
    honest: ServerResponse,
    spec: AttackSpec,
    ctx: AttackContext,
) -> AttackOutcome:
    """
    Deterministic (seeded) transformation of an honest response into a cheating
    one. Raises AttackNotApplicable when the response offers no victim.
    """
    if (spec.kind in TOPK_KINDS) != bool(honest.k):
        raise AttackNotApplicable(f"{spec.kind.value} does not apply to this response type")
    allowed = categories_for(spec.kind, honest.mode)
    if not allowed:
        raise AttackNotApplicable(f"{spec.kind.value} does not apply in {honest.mode.value}")

    pools = _victim_pools(ctx, honest)
    order = [spec.victim] if spec.victim is not None else allowed
    category = next((c for c in order if c in allowed and pools[c]), None)
    if category is None:
        raise AttackNotApplicable(f"{spec.kind.value}: no victim available")
    victims = _pick(pools[category], spec)

    kind = spec.kind
    if kind is AttackKind.TAMPER_STRING:
        response = _tamper_bytes(honest, victims)
    elif kind is AttackKind.ADD_FALSE_HITS_V1:
        response = _with(honest, sorted(set(honest.results) | set(victims), key=phi_key))
    elif kind is AttackKind.ADD_FALSE_HITS_V2:
        wanted = set(honest.results) | set(victims)
        response = _rebuilt(ctx, honest, sorted(wanted), force_open=frozenset(victims))
    elif kind is AttackKind.DROP_SIMILAR_V1:
        response = _with(honest, [r for r in honest.results if r not in set(victims)])
    elif kind is AttackKind.DROP_SIMILAR_V2:
        mates = _leaf_mates(ctx.tree, victims)
        kept = [r for r in honest.results if r not in mates]
        response = _rebuilt(ctx, honest, kept, force_closed=frozenset(victims))
    elif kind is AttackKind.DBH_RELABEL:
        response = _relabel_into_dbh(ctx, honest, victims)
    elif kind is AttackKind.MF_RANGE_SHIFT:
        response = _shift_ranges(honest, victims)
    elif kind is AttackKind.REORDER_TOPK:
        if len(honest.results) < 2:
            raise AttackNotApplicable("reorder_topk needs at least two results")
        r = list(honest.results)
        r[0], r[1] = r[1], r[0]
        response = _with(honest, r)
        victims = r[:2]
    elif kind is AttackKind.TRUNCATE_TOPK:
        cut = min(spec.count, len(honest.results))
        response = _with(honest, honest.results[:-cut])
        victims = list(honest.results[-cut:])
    else:
        raise AttackNotApplicable(f"unknown attack {kind}")

    step, diagnosis = EXPECTED[(kind, category)]
    logger.debug(
        "apply_attack | kind={} category={} victims={} expected={}/{}",
        kind.value,
        category.value,
        len(victims),
        step.value,
        diagnosis.value,
    )
    return AttackOutcome(
        response=response,
        kind=kind,
        category=category,
        victims=tuple(victims),
        expected_step=step,
        expected_diagnosis=diagnosis,
    )
