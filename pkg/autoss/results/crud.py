from __future__ import annotations

from typing import Iterable, List, Optional

from sqlalchemy import func, select
from sqlalchemy.orm import Session, selectinload

from autoss.core.config import logger
from autoss.harness.bench import BenchRecord
from autoss.harness.matrix import DetectionCell
from autoss.results.models import BenchRow, DetectionRow, Run


# === Runs ===

def create_run(db: Session, kind: str, seed: int = 0, params: Optional[dict] = None) -> Run:
    logger.debug("create_run | kind={} seed={}", kind, seed)
    run = Run(kind=kind, seed=seed, params=params or {})
    db.add(run)
    db.flush()  # need the id before rows reference it
    logger.info("Run created | id={} kind={}", run.id, kind)
    return run


def get_run(db: Session, run_id: int) -> Optional[Run]:
    stmt = (
        select(Run)
        .options(selectinload(Run.bench_rows), selectinload(Run.detection_rows))
        .where(Run.id == run_id)
    )
    run = db.execute(stmt).scalar_one_or_none()
    if run is None:
        logger.warning("get_run | run not found | id={}", run_id)
    return run


def list_runs(db: Session, kind: Optional[str] = None) -> List[Run]:
    stmt = select(Run).order_by(Run.id)
    if kind is not None:
        stmt = stmt.where(Run.kind == kind)
    return list(db.execute(stmt).scalars().all())


def count_rows(db: Session, run_id: int) -> int:
    bench = db.execute(select(func.count()).select_from(BenchRow).where(BenchRow.run_id == run_id)).scalar_one()
    matrix = db.execute(
        select(func.count()).select_from(DetectionRow).where(DetectionRow.run_id == run_id)
    ).scalar_one()
    return int(bench) + int(matrix)


# === Rows ===

def add_bench_records(db: Session, run: Run, records: Iterable[BenchRecord]) -> int:
    rows = [BenchRow(run_id=run.id, **rec.model_dump()) for rec in records]
    db.add_all(rows)
    db.flush()
    logger.info("Bench rows stored | run_id={} rows={}", run.id, len(rows))
    return len(rows)


def add_detection_cells(db: Session, run: Run, cells: Iterable[DetectionCell]) -> int:
    rows = [DetectionRow(run_id=run.id, **cell.model_dump(mode="json")) for cell in cells]
    db.add_all(rows)
    db.flush()
    logger.info("Detection rows stored | run_id={} rows={}", run.id, len(rows))
    return len(rows)
