from __future__ import annotations

import csv
from pathlib import Path
from typing import IO, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel

from autoss.auth.evs2 import answer_e
from autoss.auth.verifier import verify_response
from autoss.auth.vo import ServerResponse, decode_response, encode_response
from autoss.auth.vs2 import answer
from autoss.core.config import logger
from autoss.core.errors import AttackNotApplicable, QueryError, VOFormatError
from autoss.domain.model import (
    Diagnosis,
    Mode,
    Query,
    TopKQuery,
    VerificationReport,
    VerificationStep,
)
from autoss.embedding.sparsemap import EmbeddingFunction
from autoss.harness.attacks import (
    TOPK_KINDS,
    AttackContext,
    AttackKind,
    AttackSpec,
    categories_for,
    apply_attack,
)
from autoss.index.mbtree import MBTree
from autoss.index.signing import SignatureProvider
from autoss.query.topk import topk_build_vo

HONEST = "honest"


class DetectionCell(BaseModel):
    query: str
    mode: Mode
    theta: float
    k: int = 0
    attack: str
    victim: str = ""
    seed: int = 0
    applicable: bool = True
    passed: bool
    failed_step: VerificationStep
    diagnosis: Diagnosis
    expected_step: VerificationStep
    expected_diagnosis: Diagnosis

    @property
    def is_control(self) -> bool:
        return self.attack == HONEST

    @property
    def as_expected(self) -> bool:
        if not self.applicable:
            return True
        return (self.failed_step, self.diagnosis) == (self.expected_step, self.expected_diagnosis)


class MatrixSummary(BaseModel):
    cells: int
    controls: int
    false_alarms: int
    attacks: int
    skipped: int
    missed: int
    wrong_step: int

    @property
    def clean(self) -> bool:
        return self.false_alarms == 0 and self.missed == 0 and self.wrong_step == 0


def _roundtrip_verify(
    q: str,
    theta: float,
    response: ServerResponse,
    public_key: bytes,
    f: Optional[EmbeddingFunction],
    provider: Optional[SignatureProvider],
    k: int,
) -> VerificationReport:
    """The client only ever sees bytes, so the response goes through the codec first."""
    try:
        decoded = decode_response(encode_response(response))
    except VOFormatError as exc:
        return VerificationReport(
            passed=False,
            failed_step=VerificationStep.STEP1,
            diagnosis=Diagnosis.MALFORMED_VO,
            detail=str(exc),
        )
    return verify_response(q, theta, decoded, public_key, k=k, f=f, provider=provider)


def _honest(
    tree: MBTree,
    f: Optional[EmbeddingFunction],
    q: str,
    theta: float,
    mode: Mode,
    k: int,
) -> ServerResponse:
    if k:
        return topk_build_vo(tree, TopKQuery(q, k, theta), mode, f)
    if mode is Mode.EVS2:
        return answer_e(tree, f, Query(q, theta))  # type: ignore[arg-type]
    return answer(tree, Query(q, theta))


def run_detection_matrix(
    tree: MBTree,
    f: Optional[EmbeddingFunction],
    queries: Sequence[str],
    thetas: Sequence[float],
    public_key: bytes,
    modes: Sequence[Mode] = (Mode.VS2, Mode.EVS2),
    k: int = 3,
    trials: int = 1,
    seed: int = 0,
    provider: Optional[SignatureProvider] = None,
) -> List[DetectionCell]:
    """
    Every (query, theta, mode) gets an honest control row and one row per
    applicable (attack kind, victim category, trial). Top-k attacks run against
    top-k answers with the given k (k=0 skips them). Attack seeds are derived from
    `seed` and the row position, so the matrix is reproducible.
    """
    if Mode.EVS2 in modes and f is None:
        raise QueryError("E-VS² rows need an embedding function")
    cells: List[DetectionCell] = []
    counter = 0
    for q in queries:
        for theta in thetas:
            for mode in modes:
                ctx = AttackContext(tree=tree, q=q, theta=theta, f=f)
                shapes = [0, k] if k else [0]
                for kk in shapes:
                    honest = _honest(tree, f, q, theta, mode, kk)
                    report = _roundtrip_verify(q, theta, honest, public_key, f, provider, kk)
                    cells.append(
                        DetectionCell(
                            query=q,
                            mode=mode,
                            theta=theta,
                            k=kk,
                            attack=HONEST,
                            passed=report.passed,
                            failed_step=report.failed_step,
                            diagnosis=report.diagnosis,
                            expected_step=VerificationStep.NONE,
                            expected_diagnosis=Diagnosis.OK,
                        )
                    )
                    kinds = [kind for kind in AttackKind if (kind in TOPK_KINDS) == bool(kk)]
                    for kind in kinds:
                        for category in categories_for(kind, mode):
                            for _ in range(trials):
                                counter += 1
                                spec = AttackSpec(kind=kind, seed=seed * 1_000_003 + counter, victim=category)
                                cells.append(_attack_cell(honest, spec, ctx, public_key, provider, kk))
    summary = summarize(cells)
    logger.info(
        "run_detection_matrix | cells={} attacks={} skipped={} missed={} wrong_step={} false_alarms={}",
        summary.cells,
        summary.attacks,
        summary.skipped,
        summary.missed,
        summary.wrong_step,
        summary.false_alarms,
    )
    return cells


def _attack_cell(
    honest: ServerResponse,
    spec: AttackSpec,
    ctx: AttackContext,
    public_key: bytes,
    provider: Optional[SignatureProvider],
    k: int,
) -> DetectionCell:
    base = dict(
        query=ctx.q,
        mode=honest.mode,
        theta=ctx.theta,
        k=k,
        attack=spec.kind.value,
        victim=spec.victim.value if spec.victim else "",
        seed=spec.seed,
    )
    try:
        outcome = apply_attack(honest, spec, ctx)
    except AttackNotApplicable as exc:
        logger.debug("attack skipped | kind={} reason={}", spec.kind.value, exc)
        return DetectionCell(
            **base,
            applicable=False,
            passed=True,
            failed_step=VerificationStep.NONE,
            diagnosis=Diagnosis.OK,
            expected_step=VerificationStep.NONE,
            expected_diagnosis=Diagnosis.OK,
        )
    report = _roundtrip_verify(ctx.q, ctx.theta, outcome.response, public_key, ctx.f, provider, k)
    cell = DetectionCell(
        **base,
        passed=report.passed,
        failed_step=report.failed_step,
        diagnosis=report.diagnosis,
        expected_step=outcome.expected_step,
        expected_diagnosis=outcome.expected_diagnosis,
    )
    if not cell.as_expected:
        logger.warning(
            "unexpected verdict | kind={} victim={} q={!r} got={}/{} expected={}/{}",
            spec.kind.value,
            cell.victim,
            ctx.q,
            cell.failed_step.value,
            cell.diagnosis.value,
            cell.expected_step.value,
            cell.expected_diagnosis.value,
        )
    return cell


def summarize(cells: Iterable[DetectionCell]) -> MatrixSummary:
    cells = list(cells)
    controls = [c for c in cells if c.is_control]
    attacks = [c for c in cells if not c.is_control]
    applied = [c for c in attacks if c.applicable]
    return MatrixSummary(
        cells=len(cells),
        controls=len(controls),
        false_alarms=sum(not c.passed for c in controls),
        attacks=len(applied),
        skipped=len(attacks) - len(applied),
        missed=sum(c.passed for c in applied),
        wrong_step=sum((not c.passed) and not c.as_expected for c in applied),
    )


CSV_FIELDS = [
    "query",
    "mode",
    "theta",
    "k",
    "attack",
    "victim",
    "seed",
    "applicable",
    "passed",
    "failed_step",
    "diagnosis",
    "expected_step",
    "expected_diagnosis",
]


def write_csv(cells: Iterable[DetectionCell], out: Union[Path, IO[str]]) -> int:
    """Writes one row per cell with a header. Returns the row count."""
    if isinstance(out, Path):
        with out.open("w", newline="", encoding="utf-8") as fh:
            return write_csv(cells, fh)
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS)
    writer.writeheader()
    rows = 0
    for cell in cells:
        writer.writerow(cell.model_dump(mode="json", include=set(CSV_FIELDS)))
        rows += 1
    return rows
