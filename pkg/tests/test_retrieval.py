import pytest
from hypothesis import given
from hypothesis import strategies as st

from paracons import synth
from paracons.corpus import Dataset
from paracons.endpoints import make_endpoint
from paracons.errors import ConfigurationError, ProtocolError, ValidationError
from paracons.metrics import build_pair_set, evaluate
from paracons.protocol import Passage, Prediction
from paracons.retrieval import (
    InterventionPlan,
    annotate_ranks,
    annotate_retrieval,
    cosine,
    frequency_rank,
    match_stratified_summary,
    metric_correlation_matrix,
    normalized_rank,
    pair_metrics_by_relation,
    plan_intervention,
    random_baseline,
    rank_consistency_report,
    retriever_pair_metrics,
    run_intervention,
    similarity_summary,
)
from paracons.runner import run_scorer


def mk_pred(passages, embedding=None, key=("R0", "s0", 0), chosen="a", prompt=""):
    return Prediction(
        relation_id=key[0],
        subject=key[1],
        template_index=key[2],
        prompt=prompt,
        chosen=chosen,
        scores=[],
        passages=passages,
        query_embedding=embedding,
    )


def passages(ids_titles):
    return [Passage(pid, title, f"{title} text") for pid, title in ids_titles]


# -- pair metrics ----------------------------------------------------------------


def test_identical_lists_full_overlap():
    plist = passages([("p1", "t1"), ("p2", "t1"), ("p3", "t2")])
    m = retriever_pair_metrics(mk_pred(plist), mk_pred(plist, key=("R0", "s0", 1)))
    assert m.id_overlap == 1.0
    assert m.title_overlap == 1.0
    assert not m.mismatched_counts


def test_disjoint_ids_half_shared_titles():
    a = passages([(f"a{i}", f"t{i % 10}") for i in range(20)])
    b = passages([(f"b{i}", f"t{i % 10}" if i < 10 else f"u{i}") for i in range(20)])
    m = retriever_pair_metrics(mk_pred(a), mk_pred(b, key=("R0", "s0", 1)))
    assert m.id_overlap == 0.0
    assert m.title_overlap == 0.5


def test_multiset_semantics_and_count_mismatch():
    a = passages([("p1", "t"), ("p1", "t"), ("p2", "t")])
    b = passages([("p1", "t"), ("p3", "t")])
    m = retriever_pair_metrics(mk_pred(a), mk_pred(b, key=("R0", "s0", 1)))
    # one shared id instance over the larger count of 3
    assert m.id_overlap == pytest.approx(1 / 3)
    assert m.title_overlap == pytest.approx(2 / 3)
    assert m.mismatched_counts


def test_cosine_basics():
    assert cosine([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert cosine([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(-1.0)
    assert cosine([0.0, 0.0], [1.0, 0.0]) is None
    with pytest.raises(ValidationError):
        cosine([1.0], [1.0, 2.0])


@given(st.data())
def test_id_overlap_never_exceeds_title_overlap(data):
    # titles are a deterministic function of ids (id refines title)
    def plist(seed_ids):
        return passages([(f"p{i}", f"t{i // 3}") for i in seed_ids])

    ids_a = data.draw(st.lists(st.integers(0, 12), min_size=1, max_size=12))
    ids_b = data.draw(st.lists(st.integers(0, 12), min_size=1, max_size=12))
    m = retriever_pair_metrics(mk_pred(plist(ids_a)), mk_pred(plist(ids_b), key=("R0", "s0", 1)))
    assert m.id_overlap <= m.title_overlap + 1e-12


# -- ranks -------------------------------------------------------------------------


def test_worked_rank_example_exactly_half():
    plist = [
        Passage("p1", "doc", "Norway Norway Norway Norway Canada Singapore Singapore"),
        Passage("p2", "doc", "Norway Norway Norway Canada Singapore Singapore Singapore"),
    ]
    pred = mk_pred(plist, chosen="Singapore")
    rec = frequency_rank(pred, ["Canada", "Norway", "Singapore"], gold="Norway")
    assert rec.candidate_frequencies == {"Canada": 2, "Norway": 7, "Singapore": 5}
    assert rec.pred_rank == 0.5
    assert rec.gold_rank == 0.0


def test_rank_of_unique_top_is_zero():
    assert normalized_rank({"a": 9, "b": 2, "c": 0}, "a") == 0.0


def test_tied_top_fractional_rank():
    # two tied at the top of three: positions {1,2} -> 1.5 -> 0.25 normalized
    assert normalized_rank({"a": 5, "b": 5, "c": 1}, "a") == 0.25
    assert normalized_rank({"a": 5, "b": 5, "c": 1}, "b") == 0.25


def test_single_candidate_rank_zero():
    assert normalized_rank({"only": 0}, "only") == 0.0


def test_rank_invariant_under_reorder_and_duplication():
    plist = [
        Passage("p1", "t", "alpha alpha beta"),
        Passage("p2", "t", "beta gamma"),
    ]
    cands = ["alpha", "beta", "gamma"]
    base = frequency_rank(mk_pred(plist, chosen="beta"), cands, "alpha")
    flipped = frequency_rank(mk_pred(list(reversed(plist)), chosen="beta"), cands, "alpha")
    doubled = frequency_rank(mk_pred(plist + plist, chosen="beta"), cands, "alpha")
    assert base.pred_rank == flipped.pred_rank == doubled.pred_rank
    assert base.gold_rank == flipped.gold_rank == doubled.gold_rank
    assert doubled.candidate_frequencies == {c: 2 * n for c, n in base.candidate_frequencies.items()}


@given(st.dictionaries(st.text("ab", min_size=1, max_size=3), st.integers(0, 9), min_size=1, max_size=6))
def test_rank_bounds(freqs):
    for cand in freqs:
        assert 0.0 <= normalized_rank(freqs, cand) <= 1.0


# -- baselines ---------------------------------------------------------------------


def scored(dataset, spec, tmp_path, name, seed=0, n_passages=10, **kw):
    ep = make_endpoint(spec, seed)
    return run_scorer(
        dataset, ep, tmp_path / name, seed=seed, want_retrieval=True, n_passages=n_passages, **kw
    )


def test_r_all_near_zero_on_unique_passages(tmp_path):
    ds = synth.make_dataset(3, n_tuples=8, seed=21)
    preds = scored(ds, "mock:oracle?reuse_p=1.0", tmp_path, "c.jsonl")
    base = random_baseline(preds, "r_all", n_samples=400, seed=3)
    cells = similarity_summary(base.per_relation)
    assert cells["id"].mu.mean == pytest.approx(0.0, abs=0.01)
    assert cells["title"].mu.mean == pytest.approx(0.0, abs=0.01)


def test_r_subject_hub_lifts_id_overlap(tmp_path):
    ds = synth.make_dataset(2, n_tuples=8, seed=22)
    preds = scored(ds, "mock:oracle?hub=1&reuse_p=1.0", tmp_path, "c.jsonl", n_passages=20)
    base = random_baseline(preds, "r_subject", n_samples=400, seed=3)
    cells = similarity_summary(base.per_relation)
    assert cells["id"].mu.mean == pytest.approx(1 / 20, abs=0.005)


def test_baseline_deterministic_and_validated(tmp_path):
    ds = synth.make_dataset(2, n_tuples=6, seed=23)
    preds = scored(ds, "mock:oracle", tmp_path, "c.jsonl")
    a = random_baseline(preds, "r_all", n_samples=100, seed=9)
    b = random_baseline(preds, "r_all", n_samples=100, seed=9)
    assert [
        [m.id_overlap for m in a.per_relation[r]] for r in sorted(a.per_relation)
    ] == [[m.id_overlap for m in b.per_relation[r]] for r in sorted(b.per_relation)]
    with pytest.raises(ConfigurationError):
        random_baseline(preds, "r_everything", 10, 0)


def test_r_subject_skips_single_subject_relations(tmp_path):
    ds = Dataset([synth.make_relation("R000", n_tuples=1, seed=1)])
    preds = scored(ds, "mock:oracle", tmp_path, "c.jsonl")
    base = random_baseline(preds, "r_subject", n_samples=50, seed=1)
    assert base.per_relation == {}


# -- interventions -------------------------------------------------------------------


@pytest.fixture
def baseline_run(tmp_path):
    ds = synth.make_dataset(3, n_tuples=5, n_candidates=5, seed=31)
    preds = scored(ds, "mock:freq_reader?reuse_p=0.6", tmp_path, "base.jsonl", n_passages=8)
    return ds, preds


def test_relevant_mode_gives_full_id_overlap(baseline_run, tmp_path):
    ds, preds = baseline_run
    plan = plan_intervention(ds, preds, "relevant", seed=5, n_passages=8)
    ep = make_endpoint("mock:freq_reader?reuse_p=0.6", 5)
    forced_preds = run_intervention(ds, plan, ep, tmp_path / "iv.jsonl", seed=5)
    ps = build_pair_set(ds, forced_preds)
    annotate_retrieval(ps, forced_preds)
    all_pairs = ps.all_pairs()
    assert all_pairs
    assert all(p.id_overlap == 1.0 for p in all_pairs)
    # pure function of (fact, passages) -> exact consistency 1.0
    summary = evaluate(ds, forced_preds)
    assert summary.macro_of("consistency").mean == 1.0
    assert summary.macro_of("consistency").std == 0.0


def test_relevant_donor_is_canonical_template(baseline_run):
    ds, preds = baseline_run
    index = {p.key: p for p in preds}
    plan = plan_intervention(ds, preds, "relevant", seed=5, n_passages=8)
    rel = ds.relations[0]
    subj = rel.tuples[0].subject
    donor = index[(rel.relation_id, subj, rel.spec.lama_index)]
    assert plan.passages_by_tuple[(rel.relation_id, subj)] == donor.passages


def test_irr_cohesive_borrows_another_subject(baseline_run):
    ds, preds = baseline_run
    index = {p.key: p for p in preds}
    plan = plan_intervention(ds, preds, "irr_cohesive", seed=5, n_passages=8)
    for rel in ds.relations:
        lama = rel.spec.lama_index
        donor_sets = {
            t.subject: [p.passage_id for p in index[(rel.relation_id, t.subject, lama)].passages]
            for t in rel.tuples
        }
        for t in rel.tuples:
            got = [p.passage_id for p in plan.passages_by_tuple[(rel.relation_id, t.subject)]]
            assert got != donor_sets[t.subject] or all(
                got == other for other in donor_sets.values()
            )
            assert any(got == donor_sets[s] for s in donor_sets if s != t.subject)


def test_irr_cohesive_single_subject_skipped(tmp_path):
    ds = Dataset([synth.make_relation("R000", n_tuples=1, seed=2)])
    preds = scored(ds, "mock:oracle", tmp_path, "c.jsonl")
    plan = plan_intervention(ds, preds, "irr_cohesive", seed=1, n_passages=10)
    assert plan.passages_by_tuple == {}
    assert plan.skipped and plan.skipped[0][2] == "no other subject in relation"


def test_irr_incohesive_deterministic_and_shared_across_paraphrases(baseline_run, tmp_path):
    ds, preds = baseline_run
    p1 = plan_intervention(ds, preds, "irr_incohesive", seed=11, n_passages=8)
    p2 = plan_intervention(ds, preds, "irr_incohesive", seed=11, n_passages=8)
    assert p1.digest() == p2.digest()
    p3 = plan_intervention(ds, preds, "irr_incohesive", seed=12, n_passages=8)
    assert p1.digest() != p3.digest()
    qmap = p1.query_map(ds)
    rel = ds.relations[0]
    subj = rel.tuples[0].subject
    lists = [qmap[(rel.relation_id, subj, i)] for i in range(len(rel.spec.templates))]
    assert all(lst == lists[0] for lst in lists)


def test_unknown_mode_rejected(baseline_run):
    ds, preds = baseline_run
    with pytest.raises(ConfigurationError):
        plan_intervention(ds, preds, "sideways", seed=0)


def test_incohesive_needs_large_enough_pool(tmp_path):
    ds = Dataset([synth.make_relation("R000", n_tuples=1, seed=2)])
    preds = scored(ds, "mock:oracle", tmp_path, "c.jsonl", n_passages=4)
    with pytest.raises(ValidationError, match="pool"):
        plan_intervention(ds, preds, "irr_incohesive", seed=0, n_passages=500)


def test_empty_plan_yields_empty_predictions(baseline_run, tmp_path):
    ds, _ = baseline_run
    plan = InterventionPlan(mode="relevant", seed=0, n_passages=8, passages_by_tuple={})
    ep = make_endpoint("mock:oracle", 0)
    preds = run_intervention(ds, plan, ep, tmp_path / "empty.jsonl", seed=0)
    assert preds == []


class _EchoStripper:
    """Wraps an endpoint and drops the forced-passages acknowledgement."""

    def __init__(self, inner):
        self.inner = inner
        self.identity = inner.identity + "#noecho"

    def close(self):
        self.inner.close()

    def score_batch(self, requests, metas):
        responses = self.inner.score_batch(requests, metas)
        for r in responses:
            r.forced_passages_applied = None
        return responses


def test_endpoint_ignoring_forced_passages_is_hard_error(baseline_run, tmp_path):
    ds, preds = baseline_run
    plan = plan_intervention(ds, preds, "relevant", seed=5, n_passages=8)
    ep = _EchoStripper(make_endpoint("mock:oracle", 5))
    with pytest.raises(ProtocolError, match="forced"):
        run_intervention(ds, plan, ep, tmp_path / "iv.jsonl", seed=5)


def test_plan_round_trips_to_jsonl(baseline_run, tmp_path):
    ds, preds = baseline_run
    plan = plan_intervention(ds, preds, "relevant", seed=5, n_passages=8)
    plan.save(tmp_path / "plan.jsonl")
    text = (tmp_path / "plan.jsonl").read_text()
    assert text.splitlines()[0].startswith('{"kind":"intervention-plan"')
    assert len(text.splitlines()) == 1 + len(plan.passages_by_tuple) + len(plan.skipped)


# -- report building ------------------------------------------------------------------


def test_match_split_and_similarity_tables(tmp_path):
    ds = synth.make_dataset(2, n_tuples=10, n_candidates=5, seed=41)
    preds = scored(ds, "mock:parametric?q=0.6&reuse_p=0.5", tmp_path, "c.jsonl", n_passages=6)
    ps = build_pair_set(ds, preds)
    annotate_retrieval(ps, preds)
    cells = similarity_summary(pair_metrics_by_relation(ps))
    assert 0.0 < cells["id"].mu.mean < 1.0
    assert cells["id"].mu.mean <= cells["title"].mu.mean
    split = match_stratified_summary(ps)
    assert split["id"]["match"].mean is not None
    assert split["id"]["no_match"].mean is not None


def test_constant_metric_has_zero_sigma_and_absent_correlations(tmp_path):
    ds = synth.make_dataset(2, n_tuples=6, seed=42)
    preds = scored(ds, "mock:oracle?reuse_p=1.0&embedding_jitter=0.0", tmp_path, "c.jsonl")
    ps = build_pair_set(ds, preds)
    annotate_retrieval(ps, preds)
    cells = similarity_summary(pair_metrics_by_relation(ps))
    assert cells["id"].mu.mean == 1.0
    assert cells["id"].sigma.mean == 0.0
    base = random_baseline(preds, "r_all", n_samples=200, seed=7)
    matrix = metric_correlation_matrix(base)
    assert matrix["id"]["id"].mean == 1.0
    assert matrix["id"]["id"].std == 0.0
    # id/title are constant 0.0 across r-all samples -> correlation absent
    assert matrix["id"]["title"].mean is None


def test_id_title_correlation_high_with_hub(tmp_path):
    # hub passage shared within a relation: r-all pairs from the same relation
    # overlap in exactly that slot for both id and title, others not at all
    ds = synth.make_dataset(3, n_tuples=6, seed=43)
    preds = scored(ds, "mock:oracle?hub=1&reuse_p=1.0", tmp_path, "c.jsonl", n_passages=5)
    base = random_baseline(preds, "r_all", n_samples=600, seed=7)
    matrix = metric_correlation_matrix(base)
    assert matrix["id"]["title"].mean == pytest.approx(1.0, abs=1e-9)
    assert matrix["title"]["id"].mean == matrix["id"]["title"].mean


def test_rank_report_zero_for_top_frequency_reader(tmp_path):
    ds = synth.make_dataset(2, n_tuples=6, n_candidates=5, seed=44)
    preds = scored(ds, "mock:freq_reader?reuse_p=0.7", tmp_path, "c.jsonl", n_passages=6)
    ps = build_pair_set(ds, preds)
    annotate_ranks(ps, preds, ds)
    report = rank_consistency_report(ps)
    assert report.cells["pred"]["rank"].mean == 0.0
    assert report.cells["gold"]["rank"].mean == 0.0


def test_rank_report_negative_correlation_fixture():
    # agreeing tuples get identical answers with top-rank passages; disagreeing
    # tuples get different answers over flat term frequencies (mid ranks)
    rel = synth.make_relation("R000", n_templates=2, n_candidates=4, n_tuples=8, seed=45)
    preds = []
    for n, t in enumerate(rel.tuples):
        agree = n % 2 == 0
        for idx in range(2):
            if agree:
                chosen = t.object_gold
                body = f"{t.object_gold} " * 5 + " ".join(rel.spec.candidates)
            else:
                chosen = rel.spec.candidates[idx]
                body = " ".join(rel.spec.candidates) * 2
            preds.append(
                mk_pred(
                    [Passage(f"{t.subject}|{idx}", t.subject, body)],
                    key=(rel.relation_id, t.subject, idx),
                    chosen=chosen,
                )
            )
    ds = Dataset([rel])
    ps = build_pair_set(ds, preds)
    annotate_ranks(ps, preds, ds)
    report = rank_consistency_report(ps)
    assert report.correlations["pred"].mean < 0
    assert report.cells["pred"]["match"].mean < report.cells["pred"]["no_match"].mean
