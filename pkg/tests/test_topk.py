import dataclasses

import pytest

from autoss.auth.verifier import topk_thresholds, topk_verify, verify_response
from autoss.core.errors import QueryError
from autoss.domain.model import Diagnosis, Mode, TopKQuery, VerificationStep
from autoss.index.signing import DebugSigner
from autoss.query.topk import topk_build_vo, topk_search
from tests.helpers import brute_force_topk, dp_distance

PUB = b"debug-public"


def check(tq, response, f=None):
    return verify_response(tq.q, tq.theta, response, PUB, f=f, k=tq.k, provider=DebugSigner())


def with_results(response, results):
    return dataclasses.replace(response, results=tuple(results))


@pytest.mark.parametrize("k", [1, 3, 10])
def test_search_matches_oracle(small_tree, small_strings, k):
    for q in small_strings[:5] + ["abcde", "ee"]:
        tq = TopKQuery(q, k, 3)
        got = topk_search(small_tree, tq)
        assert got.results == brute_force_topk(small_strings, q, 3, k)
        assert got.distances == [dp_distance(q, s) for s in got.results]
        assert len(got.results) == min(k, got.c)


def test_k1_returns_the_query_itself(small_tree, small_strings):
    q = small_strings[42]
    got = topk_search(small_tree, TopKQuery(q, 1, 2))
    assert got.results == [q]
    assert got.effective_theta == 0.0


def test_no_similar_strings(small_tree):
    got = topk_search(small_tree, TopKQuery("zzzzzzzzzz", 3, 1))
    assert got.results == [] and got.c == 0
    assert got.effective_theta is None


def test_invalid_k():
    with pytest.raises(QueryError):
        TopKQuery("abc", 0, 1)


# --- honest answers ---

@pytest.mark.parametrize("mode", [Mode.VS2, Mode.EVS2])
def test_more_similar_than_k_verifies(small_tree, small_embedding, small_strings, mode):
    tq = TopKQuery(small_strings[0], 3, 3)
    assert topk_search(small_tree, tq).c > tq.k
    response = topk_build_vo(small_tree, tq, mode, small_embedding)
    assert len(response.results) == 3
    report = check(tq, response, small_embedding)
    assert report.passed, report.detail


@pytest.mark.parametrize("mode", [Mode.VS2, Mode.EVS2])
def test_fewer_similar_than_k_verifies(small_tree, small_embedding, small_strings, mode):
    tq = TopKQuery(small_strings[5], 50, 1)
    ranked = topk_search(small_tree, tq)
    assert ranked.c <= tq.k
    response = topk_build_vo(small_tree, tq, mode, small_embedding)
    assert list(response.results) == ranked.results
    assert check(tq, response, small_embedding).passed


def test_thresholds_follow_rank_k(small_strings):
    q = small_strings[0]
    tq = TopKQuery(q, 2, 3)
    th = topk_thresholds(tq, [q, small_strings[1]])
    assert th.inclusive and th.exclude == dp_distance(q, small_strings[1])
    assert not topk_thresholds(tq, [q]).inclusive


def test_evs2_topk_needs_embedding(small_tree):
    with pytest.raises(QueryError):
        topk_build_vo(small_tree, TopKQuery("abc", 2, 2), Mode.EVS2)


# --- tampered rankings ---

@pytest.fixture(scope="module")
def ranked_case(small_tree, small_strings):
    tq = TopKQuery(small_strings[0], 4, 3)
    response = topk_build_vo(small_tree, tq)
    assert topk_search(small_tree, tq).c > tq.k
    return tq, response


def test_swapped_ranking_is_misordered(ranked_case):
    tq, response = ranked_case
    r = list(response.results)
    r[0], r[1] = r[1], r[0]
    report = check(tq, with_results(response, r))
    assert report.failed_step is VerificationStep.STEP3
    assert report.diagnosis is Diagnosis.MISORDERED


def test_truncated_ranking_misses_a_string(ranked_case):
    tq, response = ranked_case
    report = check(tq, with_results(response, response.results[:-1]))
    assert report.failed_step is VerificationStep.STEP3
    assert report.diagnosis is Diagnosis.SIMILAR_MISSING


def test_too_many_results(ranked_case):
    tq, response = ranked_case
    fewer = TopKQuery(tq.q, tq.k - 1, tq.theta)
    report = topk_verify(fewer, response.results, response.vo, PUB, response.signature, provider=DebugSigner())
    assert report.diagnosis is Diagnosis.MISORDERED


def test_truncation_with_rewritten_k_fails(ranked_case):
    tq, response = ranked_case
    forged = dataclasses.replace(response, results=response.results[:-1], k=tq.k - 1)
    report = check(tq, forged)
    assert not report.passed
    assert report.diagnosis is Diagnosis.MALFORMED_VO

    report = topk_verify(tq, forged.results, forged.vo, PUB, forged.signature, provider=DebugSigner())
    assert report.failed_step is VerificationStep.STEP3
    assert report.diagnosis is Diagnosis.SIMILAR_MISSING


def test_range_client_rejects_topk_response(ranked_case):
    tq, response = ranked_case
    report = verify_response(tq.q, tq.theta, response, PUB, k=0, provider=DebugSigner())
    assert report.diagnosis is Diagnosis.MALFORMED_VO


def test_farther_replacement_fails(ranked_case, small_strings):
    tq, response = ranked_case
    last = dp_distance(tq.q, response.results[-1])
    farther = next(
        s for s in sorted(small_strings)
        if s not in response.results and dp_distance(tq.q, s) > last
    )
    report = check(tq, with_results(response, list(response.results[:-1]) + [farther]))
    assert not report.passed


def test_topk_verify_directly(small_tree, small_strings):
    tq = TopKQuery(small_strings[0], 3, 3)
    response = topk_build_vo(small_tree, tq)
    report = topk_verify(tq, response.results, response.vo, PUB, response.signature, provider=DebugSigner())
    assert report.passed
    assert report.components.n_R == 3
