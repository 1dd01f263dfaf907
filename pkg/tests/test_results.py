from autoss.domain.model import Diagnosis, Mode, VerificationStep
from autoss.harness.bench import BenchRecord
from autoss.harness.matrix import DetectionCell
from autoss.results import crud
from autoss.results.db import db_session_scope


def bench_record(qid: int) -> BenchRecord:
    return BenchRecord(
        query_id=qid, query="kate", mode="evs2", theta=1.0, dim=5, fanout=4,
        n_R=1, n_C=4, n_F=1, n_MF=2, n_DBH=1, n_DS=3,
        sigma_S=5.0, sigma_M=41.0, sigma_D=84.0,
        vo_bytes=300, edit_ops=6, euclid_ops=1, embed_ops=5,
        build_us=10, verify_us=20, passed=True,
    )


def cell(attack: str) -> DetectionCell:
    return DetectionCell(
        query="kate",
        mode=Mode.VS2,
        theta=1,
        attack=attack,
        passed=False,
        failed_step=VerificationStep.STEP2,
        diagnosis=Diagnosis.TAMPERED,
        expected_step=VerificationStep.STEP2,
        expected_diagnosis=Diagnosis.TAMPERED,
    )


def test_bench_run_round_trip(db_path):
    with db_session_scope(db_path) as db:
        run = crud.create_run(db, "bench", seed=3, params={"dims": [5]})
        assert crud.add_bench_records(db, run, [bench_record(0), bench_record(1)]) == 2
        run_id = run.id

    with db_session_scope(db_path) as db:
        run = crud.get_run(db, run_id)
        assert run is not None
        assert run.kind == "bench" and run.seed == 3
        assert run.params == {"dims": [5]}
        assert [r.query_id for r in run.bench_rows] == [0, 1]
        assert run.bench_rows[0].sigma_D == 84.0
        assert crud.count_rows(db, run_id) == 2


def test_detection_rows_store_enum_values(db_path):
    with db_session_scope(db_path) as db:
        run = crud.create_run(db, "matrix")
        crud.add_detection_cells(db, run, [cell("tamper_string"), cell("mf_range_shift")])
        run_id = run.id

    with db_session_scope(db_path) as db:
        rows = crud.get_run(db, run_id).detection_rows
        assert {r.attack for r in rows} == {"tamper_string", "mf_range_shift"}
        assert rows[0].mode == "vs2"
        assert rows[0].diagnosis == "tampered"


def test_list_runs_filters_by_kind(db_path):
    with db_session_scope(db_path) as db:
        crud.create_run(db, "bench")
        crud.create_run(db, "matrix")
        crud.create_run(db, "bench")

    with db_session_scope(db_path) as db:
        assert len(crud.list_runs(db)) == 3
        assert [r.kind for r in crud.list_runs(db, "bench")] == ["bench", "bench"]
        assert crud.get_run(db, 999) is None


def test_failed_scope_rolls_back(db_path):
    try:
        with db_session_scope(db_path) as db:
            crud.create_run(db, "bench")
            raise RuntimeError("boom")
    except RuntimeError:
        pass
    with db_session_scope(db_path) as db:
        assert crud.list_runs(db) == []
