from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import IO, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel

from autoss.auth.evs2 import answer_e
from autoss.auth.verifier import verify_response
from autoss.auth.vo import MF, DbhRef, Str, encode_entry, encode_rect, leaf_entries, vo_size
from autoss.auth.vs2 import answer
from autoss.core.config import app_config, logger
from autoss.domain.model import CorpusString, Mode, Query
from autoss.embedding.dbh import Hyperrect
from autoss.embedding.sparsemap import EmbeddingFunction, build_embedding
from autoss.index.mbtree import MBTree, build_tree, sign_root
from autoss.index.signing import SignatureProvider


class BenchRecord(BaseModel):
    query_id: int
    query: str
    mode: str
    theta: float
    dim: int
    fanout: int
    n_R: int
    n_C: int
    n_F: int
    n_MF: int
    n_DBH: int
    n_DS: int
    sigma_S: float
    sigma_M: float
    sigma_D: float
    vo_bytes: int
    edit_ops: int
    euclid_ops: int
    embed_ops: int
    build_us: int
    verify_us: int
    passed: bool


CSV_FIELDS = list(BenchRecord.model_fields)


@dataclass(frozen=True)
class _Trial:
    query_id: int
    q: str
    theta: float
    mode: Mode
    tree: MBTree
    f: Optional[EmbeddingFunction]
    dim: int


def _mean_size(sizes: List[int]) -> float:
    return fmean(sizes) if sizes else 0.0


def _run_trial(trial: _Trial, public_key: bytes, provider: SignatureProvider) -> BenchRecord:
    query = Query(trial.q, trial.theta)

    started = time.perf_counter_ns()
    if trial.mode is Mode.EVS2:
        response = answer_e(trial.tree, trial.f, query)  # type: ignore[arg-type]
    else:
        response = answer(trial.tree, query)
    build_us = (time.perf_counter_ns() - started) // 1000

    started = time.perf_counter_ns()
    report = verify_response(trial.q, trial.theta, response, public_key, k=0, f=trial.f, provider=provider)
    verify_us = (time.perf_counter_ns() - started) // 1000

    entries = list(leaf_entries(response.vo.root))
    rects = [r for r in response.vo.dbhs or () if isinstance(r, Hyperrect)]
    c = report.components
    return BenchRecord(
        query_id=trial.query_id,
        query=trial.q,
        mode=trial.mode.value,
        theta=trial.theta,
        dim=trial.dim,
        fanout=trial.tree.fanout,
        n_R=c.n_R,
        n_C=c.n_C,
        n_F=c.n_F,
        n_MF=c.n_MF,
        n_DBH=c.n_DBH,
        n_DS=c.n_DS,
        sigma_S=_mean_size([len(encode_entry(e)) for e in entries if isinstance(e, (Str, DbhRef))]),
        sigma_M=_mean_size([len(encode_entry(e)) for e in entries if isinstance(e, MF)]),
        sigma_D=_mean_size([len(encode_rect(r)) for r in rects]),
        vo_bytes=vo_size(response.vo),
        edit_ops=report.counters.edit_ops,
        euclid_ops=report.counters.euclid_ops,
        embed_ops=report.counters.embed_ops,
        build_us=build_us,
        verify_us=verify_us,
        passed=report.passed,
    )


def bench(
    corpus: Sequence[CorpusString],
    queries: Sequence[str],
    thetas: Sequence[float],
    dims: Sequence[int],
    fanouts: Sequence[int],
    modes: Sequence[Mode],
    provider: SignatureProvider,
    private_key: bytes,
    public_key: bytes,
    seed: int = 0,
    workers: int = 1,
) -> List[BenchRecord]:
    """
    Sweeps fanout x dim x theta x query x mode. Each (fanout) gets its own
    signed tree and each dim its own embedding; VS² rows are recorded once per
    fanout with dim=0. Trials are independent and may run on a thread pool; the
    records come back in sweep order regardless.
    """
    embeddings = {
        d: build_embedding([c.text for c in corpus], d, seed, app_config.embedding.reference_cap) for d in dims
    } if Mode.EVS2 in modes else {}

    trials: List[_Trial] = []
    for fanout in fanouts:
        tree = build_tree(corpus, fanout)
        sign_root(tree, provider, private_key)
        for theta in thetas:
            for qid, q in enumerate(queries):
                if Mode.VS2 in modes:
                    trials.append(_Trial(qid, q, theta, Mode.VS2, tree, None, 0))
                if Mode.EVS2 in modes:
                    for d, f in embeddings.items():
                        trials.append(_Trial(qid, q, theta, Mode.EVS2, tree, f, d))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda t: _run_trial(t, public_key, provider), trials))
    else:
        records = [_run_trial(t, public_key, provider) for t in trials]

    for rec in records:
        for violation in check_counter_laws(rec):
            logger.warning("counter law violated | {}", violation)
    logger.info("bench | trials={} fanouts={} dims={} thetas={}", len(records), list(fanouts), list(dims), list(thetas))
    return records


# === Counter laws ===

def expected_edit_ops(rec: BenchRecord) -> int:
    """VS²: n_R + n_C + 2 n_MF. E-VS²: n_R + n_F + 2 n_MF (DBH-strings cost no DP)."""
    middle = rec.n_F if rec.mode == Mode.EVS2.value else rec.n_C
    return rec.n_R + middle + 2 * rec.n_MF


def check_counter_laws(rec: BenchRecord) -> List[str]:
    """Empty when the record's counters reconcile with its component counts."""
    problems: List[str] = []
    want = expected_edit_ops(rec)
    if rec.edit_ops != want:
        problems.append(f"query {rec.query_id} {rec.mode}: edit_ops={rec.edit_ops}, expected {want}")
    if rec.mode == Mode.EVS2.value:
        if rec.n_C != rec.n_F + rec.n_DS:
            problems.append(f"query {rec.query_id}: n_C={rec.n_C} != n_F + n_DS")
        if rec.euclid_ops != rec.n_DBH:
            problems.append(f"query {rec.query_id}: euclid_ops={rec.euclid_ops}, expected {rec.n_DBH}")
    return problems


def edit_ops_ratio(records: Iterable[BenchRecord]) -> Optional[float]:
    """
    Mean of E-VS² / VS² edit ops over paired rows (same query, theta, fanout).
    None when nothing pairs up.
    """
    records = list(records)
    base = {
        (r.query_id, r.theta, r.fanout): r.edit_ops
        for r in records
        if r.mode == Mode.VS2.value
    }
    ratios = [
        r.edit_ops / base[(r.query_id, r.theta, r.fanout)]
        for r in records
        if r.mode == Mode.EVS2.value and base.get((r.query_id, r.theta, r.fanout))
    ]
    return fmean(ratios) if ratios else None


def write_csv(records: Iterable[BenchRecord], out: Union[Path, IO[str]]) -> int:
    if isinstance(out, Path):
        with out.open("w", newline="", encoding="utf-8") as fh:
            return write_csv(records, fh)
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS)
    writer.writeheader()
    rows = 0
    for rec in records:
        writer.writerow(rec.model_dump(mode="json"))
        rows += 1
    return rows
