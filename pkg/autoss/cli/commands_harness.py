from __future__ import annotations

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel

from autoss.auth.evs2 import answer_e
from autoss.auth.vo import encode_response
from autoss.auth.vs2 import answer
from autoss.cli.common import add_seed, add_signer, embedding_of, emit, floats, ints, modes, provider_of
from autoss.core.config import app_config, logger
from autoss.core.errors import QueryError
from autoss.domain.model import Diagnosis, Mode, Query, TopKQuery, VerificationStep
from autoss.harness import bench as bench_mod
from autoss.harness import matrix as matrix_mod
from autoss.harness.attacks import AttackContext, AttackKind, AttackSpec, VictimCategory, apply_attack
from autoss.harness.ingest import ingest, read_queries
from autoss.index.signing import load_or_create_keypair, load_public_key
from autoss.index.storage import load_tree
from autoss.query.topk import topk_build_vo
from autoss.results import crud
from autoss.results.db import db_session_scope

EXIT_FAILED = 2


# ========= Models =========

class AttackResponse(BaseModel):
    kind: AttackKind
    victim: VictimCategory
    victims: List[str]
    expected_step: VerificationStep
    expected_diagnosis: Diagnosis
    results: List[str]
    vo_path: str


class RunSummary(BaseModel):
    id: int
    kind: str
    seed: int
    created_at: datetime
    rows: int
    params: Optional[dict] = None


class RunsResponse(BaseModel):
    runs: List[RunSummary]


def _persist(db_path: Optional[str], kind: str, seed: int, params: dict, rows) -> None:
    with db_session_scope(db_path) as db:
        run = crud.create_run(db, kind, seed=seed, params=params)
        if kind == "bench":
            crud.add_bench_records(db, run, rows)
        else:
            crud.add_detection_cells(db, run, rows)


def _write(out: Optional[Path], writer, rows) -> None:
    if out is None:
        writer(rows, sys.stdout)
    else:
        writer(rows, out)


# ========= Commands =========

def cmd_attack(args: argparse.Namespace) -> int:
    tree = load_tree(args.index)
    mode = Mode(args.mode)
    f = embedding_of(args.embed)
    if mode is Mode.EVS2 and f is None:
        raise QueryError("--mode evs2 needs --embed")
    if args.topk:
        honest = topk_build_vo(tree, TopKQuery(args.q, args.topk, args.theta), mode, f)
    elif mode is Mode.EVS2:
        honest = answer_e(tree, f, Query(args.q, args.theta))  # type: ignore[arg-type]
    else:
        honest = answer(tree, Query(args.q, args.theta))

    spec = AttackSpec(
        kind=AttackKind(args.kind),
        seed=args.seed,
        count=args.count,
        victim=VictimCategory(args.victim) if args.victim else None,
    )
    outcome = apply_attack(honest, spec, AttackContext(tree=tree, q=args.q, theta=args.theta, f=f))
    args.out.write_bytes(encode_response(outcome.response))
    emit(
        AttackResponse(
            kind=outcome.kind,
            victim=outcome.category,
            victims=list(outcome.victims),
            expected_step=outcome.expected_step,
            expected_diagnosis=outcome.expected_diagnosis,
            results=list(outcome.response.results),
            vo_path=str(args.out),
        )
    )
    return 0


def cmd_matrix(args: argparse.Namespace) -> int:
    tree = load_tree(args.index)
    f = embedding_of(args.embed)
    selected = args.modes
    queries = read_queries(args.queries)
    cells = matrix_mod.run_detection_matrix(
        tree,
        f,
        queries,
        args.thetas,
        load_public_key(args.pub),
        modes=selected,
        k=args.k,
        trials=args.trials,
        seed=args.seed,
        provider=provider_of(args),
    )
    _write(args.out, matrix_mod.write_csv, cells)
    if args.db:
        params = {"queries": len(queries), "thetas": args.thetas, "modes": [m.value for m in selected], "k": args.k}
        _persist(args.db, "matrix", args.seed, params, cells)

    summary = matrix_mod.summarize(cells)
    sys.stderr.write(summary.model_dump_json() + "\n")
    return 0 if summary.clean else EXIT_FAILED


def cmd_bench(args: argparse.Namespace) -> int:
    corpus = ingest(args.data)
    queries = read_queries(args.queries)
    provider = provider_of(args)
    private_key, public_key = load_or_create_keypair(args.keys, provider)
    records = bench_mod.bench(
        corpus,
        queries,
        args.thetas,
        args.dims,
        args.fanouts,
        args.modes,
        provider,
        private_key,
        public_key,
        seed=args.seed,
        workers=args.workers,
    )
    _write(args.out, bench_mod.write_csv, records)
    if args.db:
        params = {
            "queries": len(queries),
            "thetas": args.thetas,
            "dims": args.dims,
            "fanouts": args.fanouts,
            "modes": [m.value for m in args.modes],
        }
        _persist(args.db, "bench", args.seed, params, records)
    ratio = bench_mod.edit_ops_ratio(records)
    if ratio is not None:
        logger.info("bench | evs2/vs2 edit_ops ratio={:.3f}", ratio)
    return 0


def cmd_runs(args: argparse.Namespace) -> int:
    with db_session_scope(args.db) as db:
        runs = [
            RunSummary(
                id=r.id,
                kind=r.kind,
                seed=r.seed,
                created_at=r.created_at,
                rows=crud.count_rows(db, r.id),
                params=r.params,
            )
            for r in crud.list_runs(db, kind=args.kind)
        ]
    emit(RunsResponse(runs=runs))
    return 0


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("attack", help="harness: produce one cheating server response")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    p.add_argument("--q", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.VS2.value)
    p.add_argument("--topk", type=int, default=0)
    p.add_argument("--kind", choices=[k.value for k in AttackKind], required=True)
    p.add_argument("--victim", choices=[c.value for c in VictimCategory], default=None)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    add_seed(p)
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("matrix", help="harness: run every attack against every mode, CSV to stdout")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--embed", type=Path, default=None)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--thetas", type=floats, default=[1.0, 2.0, 3.0])
    p.add_argument("--modes", type=modes, default=[Mode.VS2, Mode.EVS2])
    p.add_argument("--pub", type=Path, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--db", default=None, help="also persist the run to this SQLite file")
    add_seed(p)
    add_signer(p)
    p.set_defaults(handler=cmd_matrix)

    p = sub.add_parser("bench", help="harness: parameter sweep, CSV to stdout")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--thetas", type=floats, default=[1.0, 2.0, 3.0])
    p.add_argument("--dims", type=ints, default=[app_config.embedding.dim])
    p.add_argument("--fanouts", type=ints, default=[app_config.tree.fanout])
    p.add_argument("--modes", type=modes, default=[Mode.VS2, Mode.EVS2])
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--db", default=None, help="also persist the run to this SQLite file")
    add_seed(p)
    add_signer(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("runs", help="list persisted bench and matrix runs")
    p.add_argument("--db", default=None, help="defaults to AUTOSS_DB_PATH")
    p.add_argument("--kind", choices=["bench", "matrix"], default=None)
    p.set_defaults(handler=cmd_runs)
