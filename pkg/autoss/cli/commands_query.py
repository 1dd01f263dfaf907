from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List

from pydantic import BaseModel

from autoss.auth.evs2 import answer_e
from autoss.auth.verifier import verify_response
from autoss.auth.vo import decode_response, encode_response
from autoss.auth.vs2 import answer
from autoss.cli.common import add_signer, emit, embedding_of, provider_of
from autoss.core.errors import QueryError, VOFormatError
from autoss.domain.model import (
    Diagnosis,
    Mode,
    MultiQuery,
    Query,
    TopKQuery,
    VerificationReport,
    VerificationStep,
)
from autoss.harness.ingest import read_queries
from autoss.index.signing import load_public_key
from autoss.index.storage import load_tree
from autoss.query.multi import build_multi_vo, decode_bundle, encode_bundle, verify_multi
from autoss.query.topk import topk_build_vo

EXIT_FAILED = 2


# ========= Models =========

class QueryResponse(BaseModel):
    q: str
    theta: float
    mode: Mode
    k: int = 0
    results: List[str]
    vo_path: str
    response_bytes: int


class MultiQueryResponse(BaseModel):
    queries: List[str]
    theta: float
    mode: Mode
    results: List[List[str]]
    bundle_path: str
    proof_bytes: int
    shared_mfs: int
    shared_dbhs: int
    exemptions: int


class ReportModel(BaseModel):
    q: str
    passed: bool
    failed_step: VerificationStep
    diagnosis: Diagnosis
    detail: str = ""
    edit_ops: int = 0
    euclid_ops: int = 0
    embed_ops: int = 0
    vo_bytes: int = 0

    @classmethod
    def of(cls, q: str, report: VerificationReport) -> "ReportModel":
        return cls(
            q=q,
            passed=report.passed,
            failed_step=report.failed_step,
            diagnosis=report.diagnosis,
            detail=report.detail,
            edit_ops=report.counters.edit_ops,
            euclid_ops=report.counters.euclid_ops,
            embed_ops=report.counters.embed_ops,
            vo_bytes=report.counters.vo_bytes,
        )


class MultiReportModel(BaseModel):
    passed: bool
    reports: List[ReportModel]


def _unparseable(exc: VOFormatError) -> VerificationReport:
    return VerificationReport(
        passed=False,
        failed_step=VerificationStep.STEP1,
        diagnosis=Diagnosis.MALFORMED_VO,
        detail=str(exc),
    )


def _fail(reports: List[ReportModel]) -> int:
    for r in reports:
        if not r.passed:
            sys.stderr.write(f"FAIL q={r.q!r} {r.failed_step.value} {r.diagnosis.value}: {r.detail}\n")
    return EXIT_FAILED


# ========= Commands =========

def cmd_query(args: argparse.Namespace) -> int:
    tree = load_tree(args.index)
    mode = Mode(args.mode)
    f = embedding_of(args.embed)
    if mode is Mode.EVS2 and f is None:
        raise QueryError("--mode evs2 needs --embed")
    if args.topk:
        response = topk_build_vo(tree, TopKQuery(args.q, args.topk, args.theta), mode, f)
    elif mode is Mode.EVS2:
        response = answer_e(tree, f, Query(args.q, args.theta))  # type: ignore[arg-type]
    else:
        response = answer(tree, Query(args.q, args.theta))
    data = encode_response(response)
    args.vo.write_bytes(data)
    emit(
        QueryResponse(
            q=args.q,
            theta=args.theta,
            mode=mode,
            k=response.k,
            results=list(response.results),
            vo_path=str(args.vo),
            response_bytes=len(data),
        )
    )
    return 0


def cmd_multi_query(args: argparse.Namespace) -> int:
    tree = load_tree(args.index)
    mode = Mode(args.mode)
    f = embedding_of(args.embed)
    mq = MultiQuery(tuple(read_queries(args.queries)), args.theta)
    bundle = build_multi_vo(tree, f, mq, mode)
    args.out.write_bytes(encode_bundle(bundle))
    emit(
        MultiQueryResponse(
            queries=list(mq.strings),
            theta=mq.theta,
            mode=mode,
            results=[list(s.results) for s in bundle.sections],
            bundle_path=str(args.out),
            proof_bytes=bundle.proof_bytes(),
            shared_mfs=len(bundle.shared_mfs),
            shared_dbhs=len(bundle.shared_rects),
            exemptions=bundle.exemption_count(),
        )
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    public_key = load_public_key(args.pub)
    f = embedding_of(args.embed)
    try:
        response = decode_response(args.vo.read_bytes())
    except VOFormatError as exc:
        report = _unparseable(exc)
    else:
        report = verify_response(
            args.q, args.theta, response, public_key, f=f, k=args.topk, provider=provider_of(args)
        )
    model = ReportModel.of(args.q, report)
    emit(model)
    return 0 if model.passed else _fail([model])


def cmd_verify_multi(args: argparse.Namespace) -> int:
    public_key = load_public_key(args.pub)
    f = embedding_of(args.embed)
    mq = MultiQuery(tuple(read_queries(args.queries)), args.theta)
    try:
        bundle = decode_bundle(args.bundle.read_bytes())
    except VOFormatError as exc:
        reports = [_unparseable(exc) for _ in mq.strings]
    else:
        reports = verify_multi(mq, bundle, public_key, f=f, provider=provider_of(args))
    models = [ReportModel.of(q, r) for q, r in zip(mq.strings, reports)]
    out = MultiReportModel(passed=all(m.passed for m in models), reports=models)
    emit(out)
    return 0 if out.passed else _fail(models)


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("query", help="server: answer one query with its VO")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    p.add_argument("--q", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.VS2.value)
    p.add_argument("--topk", type=int, default=0)
    p.add_argument("--vo", type=Path, required=True)
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("multi-query", help="server: answer several queries with one bundle")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.VS2.value)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_multi_query)

    p = sub.add_parser("verify", help="client: check a server response")
    p.add_argument("--vo", type=Path, required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--pub", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    p.add_argument("--topk", type=int, default=0, help="k the client asked for (0: range query)")
    add_signer(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("verify-multi", help="client: check a multi-query bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--pub", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    add_signer(p)
    p.set_defaults(handler=cmd_verify_multi)
