import math

import pytest

from clozebridge import BridgeConfig, BridgeScorer

ANSWERS = ["paris", "london", "berlin", "oslo", "tokyo", "madrid"]


def request(prompt, candidates, rid="r1", **kw):
    return {"request_id": rid, "prompt": prompt, "candidates": candidates, **kw}


@pytest.fixture(scope="module")
def masked(masked_model_dir):
    return BridgeScorer(BridgeConfig(model_path=str(masked_model_dir), family="masked"))


@pytest.fixture(scope="module")
def seq2seq(seq2seq_model_dir):
    return BridgeScorer(BridgeConfig(model_path=str(seq2seq_model_dir), family="seq2seq"))


@pytest.fixture(scope="module")
def causal(causal_model_dir):
    return BridgeScorer(BridgeConfig(model_path=str(causal_model_dir), family="causal"))


def argmax_candidate(resp, candidates):
    best = max(range(len(resp["scores"])), key=lambda i: (resp["scores"][i], -i))
    return candidates[best]


def assert_valid(resp, n_candidates):
    assert "error" not in resp
    assert len(resp["scores"]) == n_candidates
    assert all(math.isfinite(s) for s in resp["scores"])


def test_masked_prompt_hint_wins(masked):
    for hint in ANSWERS:
        resp = masked.score_request(
            request(f"the answer is {hint} . anne is [MASK] .", ANSWERS)
        )
        assert_valid(resp, len(ANSWERS))
        assert argmax_candidate(resp, ANSWERS) == hint


def test_masked_free_generation_matches_constrained(masked):
    resp = masked.score_request(request("the answer is oslo . idun lives in [MASK] .", ANSWERS))
    assert resp["free_generation"] == "oslo"
    assert argmax_candidate(resp, ANSWERS) == "oslo"


def test_masked_single_candidate_trivially_chosen(masked):
    resp = masked.score_request(request("anne is [MASK] .", ["tokyo"]))
    assert_valid(resp, 1)


def test_empty_candidates_is_protocol_error(masked):
    resp = masked.score_request(request("anne is [MASK] .", []))
    assert resp["request_id"] == "r1"
    assert "error" in resp and "scores" not in resp


def test_unrepresentable_candidate_gets_finite_sentinel(masked):
    resp = masked.score_request(request("anne is [MASK] .", ["paris", "zyzzyva"]))
    assert_valid(resp, 2)
    assert resp["scores"][1] == -1e9
    assert resp["notes"]["zyzzyva"] == "unrepresentable"
    assert argmax_candidate(resp, ["paris", "zyzzyva"]) == "paris"


def test_masked_deterministic(masked):
    a = masked.score_request(request("anne died in [MASK] .", ANSWERS))
    b = masked.score_request(request("anne died in [MASK] .", ANSWERS))
    assert a["scores"] == b["scores"]


def test_multi_token_candidate_scored_with_expanded_masks(masked):
    resp = masked.score_request(request("anne is [MASK] .", ["paris", "paris london"]))
    assert_valid(resp, 2)
    assert resp.get("notes") is None


def test_seq2seq_shape_and_duplicates(seq2seq):
    resp = seq2seq.score_request(request("anne lives in [MASK] .", ["paris", "paris", "oslo"]))
    assert_valid(resp, 3)
    assert resp["scores"][0] == resp["scores"][1]
    free = resp.get("free_generation")
    assert free is None or isinstance(free, str)


def test_seq2seq_sentinel_change_keeps_shape(seq2seq_model_dir):
    alt = BridgeScorer(
        BridgeConfig(model_path=str(seq2seq_model_dir), family="seq2seq", sentinel="[MASK]")
    )
    resp = alt.score_request(request("anne lives in [MASK] .", ANSWERS))
    assert_valid(resp, len(ANSWERS))


def test_causal_shape_duplicates_and_determinism(causal):
    resp = causal.score_request(request("anne lives in [MASK] .", ["paris", "paris", "oslo"]))
    assert_valid(resp, 3)
    assert resp["scores"][0] == resp["scores"][1]
    again = causal.score_request(request("anne lives in [MASK] .", ["paris", "paris", "oslo"]))
    assert resp["scores"] == again["scores"]


def test_causal_free_generation_only_for_trailing_slot(causal):
    trailing = causal.score_request(request("anne lives in [MASK] .", ANSWERS))
    assert isinstance(trailing.get("free_generation"), str)
    mid = causal.score_request(request("[MASK] is the city of anne .", ANSWERS))
    assert mid.get("free_generation") is None


def test_causal_length_normalization(causal_model_dir):
    plain = BridgeScorer(BridgeConfig(model_path=str(causal_model_dir), family="causal"))
    normed = BridgeScorer(
        BridgeConfig(model_path=str(causal_model_dir), family="causal", length_normalize=True)
    )
    cands = ["paris", "paris london"]
    prompt = "anne lives in [MASK] ."
    raw = plain.score_request(request(prompt, cands))["scores"]
    norm = normed.score_request(request(prompt, cands))["scores"]
    assert norm[0] == pytest.approx(raw[0])  # single token: k = 1
    assert norm[1] == pytest.approx(raw[1] / 2)  # two-token candidate


def test_length_matched_candidates_score_comparably(causal):
    # all-single-token fixture: no candidate is penalized for token count
    resp = causal.score_request(request("anne lives in [MASK] .", ANSWERS))
    spread = max(resp["scores"]) - min(resp["scores"])
    assert math.isfinite(spread)
    assert all(s != -1e9 for s in resp["scores"])


def test_forced_passages_echoed_and_flagged(masked):
    forced = [{"passage_id": "p0", "title": "t", "text": "the answer is berlin ."}]
    resp = masked.score_request(
        request("anne is [MASK] .", ANSWERS, forced_passages=forced)
    )
    assert resp["forced_passages_applied"] is True
    assert resp["passages"] == forced


def test_passage_table_lookup_and_context(masked_model_dir, passages_table):
    scorer = BridgeScorer(
        BridgeConfig(
            model_path=str(masked_model_dir),
            family="masked",
            passages_path=str(passages_table),
        )
    )
    resp = scorer.score_request(
        request("anne is [MASK] .", ANSWERS, want_retrieval=True, n_passages=2)
    )
    assert [p["passage_id"] for p in resp["passages"]] == ["anne-p0", "anne-p1"]
    # with passages as context, the hint inside the passage steers the mask
    ctx = BridgeScorer(
        BridgeConfig(
            model_path=str(masked_model_dir),
            family="masked",
            passages_path=str(passages_table),
            passages_as_context=True,
            max_length=64,
        )
    )
    resp2 = ctx.score_request(
        request("idun is [MASK] .", ANSWERS, want_retrieval=True, n_passages=1)
    )
    assert_valid(resp2, len(ANSWERS))
    assert resp2["scores"] != resp["scores"]


def test_query_embedding_fixed_dimension(masked):
    a = masked.score_request(request("anne is [MASK] .", ANSWERS, want_retrieval=True))
    b = masked.score_request(
        request("lovisa died in [MASK] .", ANSWERS, want_retrieval=True, rid="r2")
    )
    assert len(a["query_embedding"]) == len(b["query_embedding"]) == 48


def test_bad_config_rejected(masked_model_dir):
    with pytest.raises(ValueError):
        BridgeScorer(BridgeConfig(model_path=str(masked_model_dir), family="quantum"))
    with pytest.raises(ValueError):
        BridgeScorer(BridgeConfig(model_path="/nonexistent/model", family="masked"))
