
import pytest

from autoss.auth.evs2 import answer_e, build_vo_e, classify_cstrings
from autoss.auth.verifier import verify, verify_e, verify_response
from autoss.auth.vo import (
    DbhRef,
    Group,
    Str,
    VerificationObject,
    decode_response,
    encode_response,
    encode_vo,
    leaf_entries,
)
from autoss.auth.vs2 import build_vo, traverse
from autoss.domain.model import Diagnosis, Query, VerificationStep
from autoss.embedding.dbh import Hyperrect
from autoss.embedding.sparsemap import euclid
from autoss.index.signing import DebugSigner
from tests.helpers import brute_force

PUB = b"debug-public"
QUERIES = ["abcab", "eeddc", "aaaa", "cbadeb"]


def check_e(tree, f, query, results, vo):
    return verify_e(query, results, vo, f, PUB, tree.root_signature, DebugSigner())


@pytest.mark.parametrize("q", QUERIES)
@pytest.mark.parametrize("theta", [1, 2])
def test_honest_answer_verifies(small_tree, small_embedding, small_strings, q, theta):
    query = Query(q, theta)
    results, vo = build_vo_e(small_tree, small_embedding, query)
    assert results == brute_force(small_strings, q, theta)

    report = check_e(small_tree, small_embedding, query, results, vo)
    assert report.passed, report.detail

    c = report.components
    assert c.n_C == c.n_F + c.n_DS
    assert report.counters.edit_ops == c.n_R + c.n_F + 2 * c.n_MF
    assert report.counters.euclid_ops == c.n_DBH


@pytest.mark.parametrize("q", QUERIES)
def test_evs2_never_costs_more_edit_ops(small_tree, small_embedding, q):
    query = Query(q, 2)
    vs2 = verify(query, *build_vo(small_tree, query), PUB, small_tree.root_signature, DebugSigner())
    evs2 = check_e(small_tree, small_embedding, query, *build_vo_e(small_tree, small_embedding, query))
    assert vs2.passed and evs2.passed
    assert evs2.counters.edit_ops <= vs2.counters.edit_ops
    assert evs2.components.n_R == vs2.components.n_R
    assert evs2.components.n_MF == vs2.components.n_MF


def test_huge_theta_has_no_rectangles(example_tree, small_embedding):
    query = Query("kate", 50)
    _, plain = build_vo(example_tree, query)
    _, vo = build_vo_e(example_tree, small_embedding, query)
    assert vo.dbhs is None
    assert vo == plain
    assert encode_vo(vo) == encode_vo(plain)


def test_classify_cstrings(small_embedding):
    q = "abcab"
    p_q = small_embedding.embed(q)
    strings = ["abcab", "abcaa", "eeeee", "dddddd"]
    cls = classify_cstrings(small_embedding, q, 1, strings)
    assert "abcab" in cls.fp
    assert sorted(cls.fp + cls.ds) == sorted(strings)
    for s in cls.ds:
        assert euclid(p_q, cls.points[s]) > 1
    for s in cls.fp:
        assert euclid(p_q, cls.points[s]) <= 1
    assert classify_cstrings(small_embedding, q, 1, []).points == {}


def test_response_round_trip(small_tree, small_embedding):
    response = answer_e(small_tree, small_embedding, Query("eeddc", 2))
    decoded = decode_response(encode_response(response))
    assert decoded == response
    report = verify_response("eeddc", 2, decoded, PUB, k=0, f=small_embedding, provider=DebugSigner())
    assert report.passed


def test_missing_embedding_is_malformed(small_tree, small_embedding):
    response = answer_e(small_tree, small_embedding, Query("eeddc", 2))
    report = verify_response("eeddc", 2, response, PUB, k=0, provider=DebugSigner())
    assert report.diagnosis is Diagnosis.MALFORMED_VO


# --- tampered rectangles ---

def _with_rects(vo, rects):
    return VerificationObject(root=vo.root, dbhs=tuple(rects))


def _refs(vo):
    return [e for e in leaf_entries(vo.root) if isinstance(e, DbhRef)]


@pytest.fixture(scope="module")
def dbh_case(small_tree, small_embedding, small_strings):
    """A corpus query at theta=1 whose answer has results and DBH-strings."""
    for q in small_strings:
        query = Query(q, 1)
        results, vo = build_vo_e(small_tree, small_embedding, query)
        if results and _refs(vo):
            return query, results, vo
    pytest.fail("no query with DBH-strings in the small corpus")


def test_traversal_separates_results_from_cstrings(small_tree, dbh_case):
    query, results, _ = dbh_case
    t = traverse(small_tree, query.q, query.theta)
    assert t.results == results
    assert not set(t.results) & set(t.c_strings)


def test_moved_rectangle_loses_its_points(small_tree, small_embedding, dbh_case):
    query, results, vo = dbh_case
    ref = _refs(vo)[0]
    p = small_embedding.embed(ref.text)
    rects = list(vo.dbhs)
    rects[ref.dbh_index] = Hyperrect(tuple(float(v) for v in p + 1000.0), tuple(float(v) for v in p + 1001.0))
    report = check_e(small_tree, small_embedding, query, results, _with_rects(vo, rects))
    assert not report.passed
    assert report.failed_step is VerificationStep.STEP4
    assert report.diagnosis is Diagnosis.POINT_NOT_IN_CLAIMED_DBH


def test_rectangle_covering_query_is_not_distant(small_tree, small_embedding, dbh_case):
    query, results, vo = dbh_case
    p_q = tuple(float(v) for v in small_embedding.embed(query.q))
    idx = _refs(vo)[0].dbh_index
    rects = list(vo.dbhs)
    rects[idx] = rects[idx].envelope(Hyperrect(p_q, p_q))
    report = check_e(small_tree, small_embedding, query, results, _with_rects(vo, rects))
    assert report.failed_step is VerificationStep.STEP4
    assert report.diagnosis is Diagnosis.DBH_NOT_DISTANT


def test_result_hidden_as_dbh_string(small_tree, small_embedding, dbh_case):
    query, results, vo = dbh_case
    victim = results[0]
    root = _replace_entry(vo.root, victim, DbhRef(victim, _refs(vo)[0].dbh_index))
    report = check_e(
        small_tree,
        small_embedding,
        query,
        [r for r in results if r != victim],
        VerificationObject(root=root, dbhs=vo.dbhs),
    )
    assert not report.passed
    assert report.failed_step is VerificationStep.STEP4


def test_rectangle_dimension_mismatch(small_tree, small_embedding, dbh_case):
    query, results, vo = dbh_case
    rects = list(vo.dbhs) + [Hyperrect((100.0,), (101.0,))]
    report = check_e(small_tree, small_embedding, query, results, _with_rects(vo, rects))
    assert report.diagnosis is Diagnosis.MALFORMED_VO


def test_dbh_refs_match_rectangles(small_embedding, dbh_case):
    query, _, vo = dbh_case
    p_q = small_embedding.embed(query.q)
    for e in _refs(vo):
        p = small_embedding.embed(e.text)
        assert euclid(p_q, p) > query.theta
        assert vo.dbhs[e.dbh_index].contains(p)



class _Pinned:
    """Embedding that moves chosen strings to fixed points; not contractive."""

    def __init__(self, f, points):
        self.dim = f.dim
        self._f = f
        self._points = points

    def embed(self, s):
        return self._points[s] if s in self._points else self._f.embed(s)


def test_result_inside_rectangle_under_non_contractive_embedding(small_tree, small_embedding, small_strings):
    for q in small_strings:
        query = Query(q, 1)
        results, vo = build_vo_e(small_tree, small_embedding, query)
        others = [s for s in results if s != q]
        if others and _refs(vo):
            break
    else:
        pytest.fail("no query with a second result and DBH-strings in the small corpus")

    rect = vo.dbhs[0]
    pinned = _Pinned(small_embedding, {q: small_embedding.embed(q) + 1e6, others[0]: rect.lo_array})
    report = check_e(small_tree, pinned, query, results, vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP4, Diagnosis.SIMILAR_INSIDE_DBH)


def _replace_entry(entry, text, new):
    if isinstance(entry, Group):
        return Group(tuple(_replace_entry(e, text, new) for e in entry.entries))
    if isinstance(entry, Str) and entry.text == text:
        return new
    return entry
