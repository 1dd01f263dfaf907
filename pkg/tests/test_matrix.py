import csv
import io

import pytest

from autoss.core.errors import QueryError
from autoss.domain.model import Mode
from autoss.harness.matrix import CSV_FIELDS, HONEST, run_detection_matrix, summarize, write_csv
from autoss.index.signing import DebugSigner

PUB = b"debug-public"


@pytest.fixture
def cells(example_tree, small_embedding):
    return run_detection_matrix(
        example_tree,
        small_embedding,
        ["kate", "lucy"],
        [1, 2],
        PUB,
        k=3,
        seed=4,
        provider=DebugSigner(),
    )


def test_matrix_is_clean(cells):
    summary = summarize(cells)
    assert summary.clean, [c for c in cells if not c.as_expected or (c.is_control and not c.passed)]
    assert summary.controls == 2 * 2 * 2 * 2
    assert summary.attacks > 0
    assert summary.cells == len(cells)


def test_controls_pass_and_attacks_fail(cells):
    for cell in cells:
        if cell.is_control:
            assert cell.passed
        elif cell.applicable:
            assert not cell.passed
            assert cell.as_expected


def test_matrix_is_deterministic(example_tree, small_embedding, cells):
    again = run_detection_matrix(
        example_tree, small_embedding, ["kate", "lucy"], [1, 2], PUB, k=3, seed=4, provider=DebugSigner()
    )
    assert again == cells


def test_vs2_only_matrix_needs_no_embedding(example_tree):
    cells = run_detection_matrix(example_tree, None, ["kate"], [1], PUB, modes=(Mode.VS2,), k=0, provider=DebugSigner())
    assert {c.mode for c in cells} == {Mode.VS2}
    assert {c.k for c in cells} == {0}
    assert summarize(cells).clean


def test_evs2_without_embedding(example_tree):
    with pytest.raises(QueryError):
        run_detection_matrix(example_tree, None, ["kate"], [1], PUB)


def test_csv_output(cells):
    buf = io.StringIO()
    rows = write_csv(cells, buf)
    assert rows == len(cells)
    parsed = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert list(parsed[0]) == CSV_FIELDS
    assert parsed[0]["attack"] == HONEST
    assert {r["mode"] for r in parsed} == {"vs2", "evs2"}


def test_csv_to_path(cells, tmp_path):
    out = tmp_path / "matrix.csv"
    assert write_csv(cells, out) == len(cells)
    assert out.read_text(encoding="utf-8").splitlines()[0] == ",".join(CSV_FIELDS)
