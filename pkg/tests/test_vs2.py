import numpy as np
import pytest

from autoss.auth.verifier import verify, verify_response
from autoss.auth.vo import (
    MF,
    Group,
    Str,
    VerificationObject,
    decode_response,
    encode_response,
    leaf_entries,
)
from autoss.auth.vs2 import answer, build_vo, search, traverse
from autoss.core.errors import VOFormatError
from autoss.domain.metrics import dst_min, edit_distance
from autoss.domain.model import Diagnosis, Mode, Query, StringRange, VerificationStep
from autoss.index.mbtree import build_tree, sign_root
from autoss.index.signing import DebugSigner
from tests.helpers import as_corpus, brute_force, random_strings

PUB = b"debug-public"


def check(tree, query, results, vo):
    return verify(query, results, vo, PUB, tree.root_signature, DebugSigner())


# --- search ---

@pytest.mark.parametrize("seed", [31, 32, 33])
def test_search_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    words = random_strings(rng, 300)
    tree = build_tree(as_corpus(words), fanout=8)
    for q in random_strings(rng, 5) + words[:3]:
        for theta in (1, 2, 3):
            assert search(tree, Query(q, theta)) == brute_force(words, q, theta)


def test_search_edge_cases(example_tree):
    assert search(example_tree, Query("kate", 0)) == ["kate"]
    assert search(example_tree, Query("x", 100)) == example_tree.texts()


# --- VO construction ---

def test_worked_example_vo(example_tree):
    results, vo = build_vo(example_tree, Query("kate", 1))
    assert results == ["kate", "katie", "kato"]
    third_leaf = example_tree.leaves()[2]
    expected = Group((
        Group((
            Group((Str("kate"), Str("katherine"), Str("katie"))),
            Group((Str("katjana"), Str("kato"), Str("katrina"))),
        )),
        Group((
            MF(StringRange("lucas", "luke"), third_leaf.kids_digest),
            Group((Str("mary"), Str("nina"), Str("zoe"))),
        )),
    ))
    assert vo.root == expected
    assert vo.dbhs is None


def test_huge_theta_opens_everything(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 50))
    entries = list(leaf_entries(vo.root))
    assert not any(isinstance(e, MF) for e in entries)
    assert [e.text for e in entries] == example_tree.texts()


def test_noncandidate_root_is_a_single_mf():
    tree = build_tree(as_corpus(["smith", "smithe", "smithers", "smithson"]), fanout=2, leaf_fanout=2)
    results, vo = build_vo(tree, Query("zzzz", 1))
    assert results == []
    assert vo.root == MF(tree.root.range, tree.root.kids_digest)


def test_traverse_overrides(example_tree):
    t = traverse(example_tree, "kate", 1, force_open={"lucy"})
    assert not t.mfs
    assert {"lucas", "lucy", "luke"} <= set(t.c_strings)

    t = traverse(example_tree, "kate", 1, force_closed={"kato"})
    assert [(m.range.lo, m.range.hi) for m in t.mfs] == [("katjana", "katrina"), ("lucas", "luke")]
    assert t.results == ["kate", "katie"]


def test_widened_noncandidate_range_admits_similar_strings(small_tree, small_strings):
    rng = np.random.default_rng(36)
    checked = 0
    for q in rng.choice(small_strings, size=20, replace=False):
        q = str(q)
        for theta in (1, 2, 3):
            similar = search(small_tree, Query(q, theta))
            for mf in traverse(small_tree, q, theta).mfs:
                assert dst_min(q, mf.range) > theta
                for s in similar:
                    wide = mf.range.widen(s)
                    assert wide.contains(s)
                    assert wide.contains(mf.range.lo) and wide.contains(mf.range.hi)
                    assert dst_min(q, wide) <= edit_distance(q, s) <= theta
                    checked += 1
    assert checked > 0


# --- verification ---

def test_honest_answer_verifies(example_tree):
    results, vo = build_vo(example_tree, Query("kate", 1))
    report = check(example_tree, Query("kate", 1), results, vo)
    assert report.passed, report.summary()
    assert report.failed_step is VerificationStep.NONE
    assert (report.components.n_R, report.components.n_C, report.components.n_MF) == (3, 6, 1)
    assert report.counters.edit_ops == 3 + 6 + 2 * 1


def test_honest_answers_verify_on_random_corpora(small_tree, small_strings):
    rng = np.random.default_rng(34)
    queries = list(rng.choice(small_strings, size=6, replace=False)) + ["abcab", "eeee"]
    for q in queries:
        for theta in (1, 2, 3):
            query = Query(str(q), theta)
            results, vo = build_vo(small_tree, query)
            report = check(small_tree, query, results, vo)
            assert report.passed, report.summary()
            c = report.components
            assert report.counters.edit_ops == c.n_R + c.n_C + 2 * c.n_MF


def test_ed25519_round_trip(ed25519_keys):
    provider, priv, pub = ed25519_keys
    words = random_strings(np.random.default_rng(35), 80)
    tree = build_tree(as_corpus(words), fanout=4)
    sign_root(tree, provider, priv)
    query = Query(words[10], 2)
    results, vo = build_vo(tree, query)
    assert verify(query, results, vo, pub, tree.root_signature).passed


def test_dropped_similar_string(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 1))
    report = check(example_tree, Query("kate", 1), ["kate", "katie"], vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP3, Diagnosis.SIMILAR_MISSING)


def test_inserted_c_string(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 1))
    report = check(example_tree, Query("kate", 1), ["kate", "katie", "kato", "mary"], vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP3, Diagnosis.DISSIMILAR_RETURNED)


def test_result_inside_mf_range(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 1))
    report = check(example_tree, Query("kate", 1), ["kate", "katie", "kato", "lucy"], vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP1, Diagnosis.STRING_IN_NC_RANGE)


def test_result_missing_from_vo(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 1))
    report = check(example_tree, Query("kate", 1), ["kate", "katie", "kato", "kb"], vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP1, Diagnosis.TAMPERED)


def test_mf_claimed_for_candidate_leaf(example_tree):
    t = traverse(example_tree, "kate", 1, returned={"kate", "katie"}, force_closed={"kato"})
    report = check(example_tree, Query("kate", 1), t.results, VerificationObject(t.root))
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP3, Diagnosis.CANDIDATE_CLAIMED_NC)


def test_unsorted_vo_is_malformed(example_tree):
    _, vo = build_vo(example_tree, Query("kate", 1))
    left, right = vo.root.entries
    swapped = VerificationObject(Group((right, left)))
    report = check(example_tree, Query("kate", 1), ["kate", "katie", "kato"], swapped)
    assert not report.passed
    assert report.failed_step is VerificationStep.STEP1


def _map_mfs(entry, fn):
    if isinstance(entry, Group):
        return Group(tuple(_map_mfs(e, fn) for e in entry.entries))
    if isinstance(entry, MF):
        return fn(entry)
    return entry


def test_overlapping_mf_ranges(example_tree):
    t = traverse(example_tree, "kate", 1, force_closed={"kato"})
    assert [m.range.lo for m in t.mfs] == ["katjana", "lucas"]

    def stretch(mf):
        if mf.range.lo == "katjana":
            return MF(StringRange("katjana", "lucy"), mf.kids_digest)
        return mf

    vo = VerificationObject(_map_mfs(t.root, stretch))
    report = check(example_tree, Query("kate", 1), t.results, vo)
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP1, Diagnosis.OVERLAP_RANGE)


def test_signature_checks(example_tree):
    results, vo = build_vo(example_tree, Query("kate", 1))
    report = verify(Query("kate", 1), results, vo, PUB, b"short", DebugSigner())
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP2, Diagnosis.SIGNATURE_MISMATCH)
    report = verify(Query("kate", 1), results, vo, PUB, b"DBG1" + bytes(32), DebugSigner())
    assert (report.failed_step, report.diagnosis) == (VerificationStep.STEP2, Diagnosis.TAMPERED)


# --- wire format ---

def test_response_round_trip(example_tree):
    resp = answer(example_tree, Query("kate", 1))
    assert resp.mode is Mode.VS2 and resp.k == 0
    assert decode_response(encode_response(resp)) == resp


def test_truncated_response_reports_offset(example_tree):
    data = encode_response(answer(example_tree, Query("kate", 1)))
    with pytest.raises(VOFormatError) as err:
        decode_response(data[:-3])
    assert err.value.offset is not None


def test_byte_fuzz_never_passes(example_tree):
    data = encode_response(answer(example_tree, Query("kate", 1)))
    header = 4 + 1 + 4 + 8
    rng = np.random.default_rng(36)
    for _ in range(300):
        mutated = bytearray(data)
        at = int(rng.integers(header, len(data)))
        mutated[at] ^= int(rng.integers(1, 256))
        try:
            resp = decode_response(bytes(mutated))
        except VOFormatError:
            continue
        report = verify_response("kate", 1, resp, PUB, k=0, provider=DebugSigner())
        assert not report.passed
