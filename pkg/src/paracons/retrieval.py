"""Retriever agreement metrics, random baselines, interventions, frequency ranks.

Passage-list agreement uses multiset intersection over ids and titles
(ids refine titles, so id overlap never exceeds title overlap) plus cosine
similarity of query embeddings when the scorer provides them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .cache import Key
from .corpus import Dataset
from .errors import ConfigurationError, ValidationError
from .metrics import MacroStat, PairSet, macro, pearson
from .protocol import Passage, Prediction
from .text import derive_rng, term_frequencies

INTERVENTION_MODES = ("relevant", "irr_cohesive", "irr_incohesive")


# -- pairwise retriever metrics ----------------------------------------------


@dataclass
class RetrieverPairMetrics:
    id_overlap: float
    title_overlap: float
    embedding_similarity: float | None
    mismatched_counts: bool = False


def _multiset_overlap(a: list[str], b: list[str], denom: int) -> float:
    counts: dict[str, int] = {}
    for x in a:
        counts[x] = counts.get(x, 0) + 1
    shared = 0
    for x in b:
        if counts.get(x, 0) > 0:
            counts[x] -= 1
            shared += 1
    return shared / denom if denom else 0.0


def cosine(a: list[float], b: list[float]) -> float | None:
    if len(a) != len(b):
        raise ValidationError(f"embedding dimension mismatch: {len(a)} vs {len(b)}")
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return None
    return math.fsum(x * y for x, y in zip(a, b)) / (na * nb)


def retriever_pair_metrics(pred_i: Prediction, pred_j: Prediction) -> RetrieverPairMetrics:
    pa = pred_i.passages or []
    pb = pred_j.passages or []
    denom = max(len(pa), len(pb))
    similarity = None
    if pred_i.query_embedding is not None and pred_j.query_embedding is not None:
        similarity = cosine(pred_i.query_embedding, pred_j.query_embedding)
    return RetrieverPairMetrics(
        id_overlap=_multiset_overlap([p.passage_id for p in pa], [p.passage_id for p in pb], denom),
        title_overlap=_multiset_overlap([p.title for p in pa], [p.title for p in pb], denom),
        embedding_similarity=similarity,
        mismatched_counts=len(pa) != len(pb),
    )


def annotate_retrieval(pair_set: PairSet, predictions: list[Prediction]) -> int:
    """Fill retrieval overlap fields on every pair; returns mismatch count."""
    index = {p.key: p for p in predictions}
    mismatched = 0
    for pairs in pair_set.pairs.values():
        for pair in pairs:
            pi = index.get((pair.relation_id, pair.subject, pair.template_i))
            pj = index.get((pair.relation_id, pair.subject, pair.template_j))
            if pi is None or pj is None or pi.passages is None or pj.passages is None:
                continue
            m = retriever_pair_metrics(pi, pj)
            pair.id_overlap = m.id_overlap
            pair.title_overlap = m.title_overlap
            pair.embedding_similarity = m.embedding_similarity
            mismatched += int(m.mismatched_counts)
    return mismatched


# -- random baselines ---------------------------------------------------------


@dataclass
class BaselineSamples:
    mode: str
    n_samples: int
    seed: int
    per_relation: dict[str, list[RetrieverPairMetrics]] = field(default_factory=dict)


def random_baseline(
    predictions: list[Prediction],
    mode: str,
    n_samples: int = 1000,
    seed: int = 0,
) -> BaselineSamples:
    """Agreement metrics over randomly paired retrieval results.

    r_all pairs any two queries with different (relation, subject); r_subject
    pairs queries from the same relation but different subjects. Samples are
    keyed by the first query's relation.
    """
    if mode not in ("r_all", "r_subject"):
        raise ConfigurationError(f"unknown baseline mode {mode!r}")
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    eligible = sorted(
        (p for p in predictions if p.passages),
        key=lambda p: (p.relation_id, p.subject, p.template_index),
    )
    result = BaselineSamples(mode=mode, n_samples=n_samples, seed=seed)
    rng = derive_rng(seed, "baseline", mode)
    if mode == "r_all":
        distinct_tuples = {(p.relation_id, p.subject) for p in eligible}
        if len(distinct_tuples) < 2:
            return result
        for _ in range(n_samples):
            while True:
                a, b = rng.sample(range(len(eligible)), 2)
                pa, pb = eligible[a], eligible[b]
                if (pa.relation_id, pa.subject) != (pb.relation_id, pb.subject):
                    break
            result.per_relation.setdefault(pa.relation_id, []).append(
                retriever_pair_metrics(pa, pb)
            )
        return result

    by_relation: dict[str, dict[str, list[Prediction]]] = {}
    for p in eligible:
        by_relation.setdefault(p.relation_id, {}).setdefault(p.subject, []).append(p)
    pools = {
        rid: sorted(subjects) for rid, subjects in by_relation.items() if len(subjects) >= 2
    }
    if not pools:
        return result
    relation_ids = sorted(pools)
    for _ in range(n_samples):
        rid = relation_ids[rng.randrange(len(relation_ids))]
        sa, sb = rng.sample(pools[rid], 2)
        pa = rng.choice(by_relation[rid][sa])
        pb = rng.choice(by_relation[rid][sb])
        result.per_relation.setdefault(rid, []).append(retriever_pair_metrics(pa, pb))
    return result


# -- interventions ------------------------------------------------------------


@dataclass
class InterventionPlan:
    mode: str
    seed: int
    n_passages: int
    passages_by_tuple: dict[tuple[str, str], list[Passage]]
    skipped: list[tuple[str, str, str]] = field(default_factory=list)

    def query_map(self, dataset: Dataset) -> dict[Key, list[Passage]]:
        out: dict[Key, list[Passage]] = {}
        for rel in dataset.relations:
            for t in rel.tuples:
                passages = self.passages_by_tuple.get((rel.relation_id, t.subject))
                if passages is None:
                    continue
                for idx in range(len(rel.spec.templates)):
                    out[(rel.relation_id, t.subject, idx)] = passages
        return out

    def to_lines(self) -> list[str]:
        head = {
            "kind": "intervention-plan",
            "mode": self.mode,
            "seed": self.seed,
            "n_passages": self.n_passages,
        }
        lines = [json.dumps(head, sort_keys=True, separators=(",", ":"))]
        for (rid, subject) in sorted(self.passages_by_tuple):
            lines.append(
                json.dumps(
                    {
                        "relation_id": rid,
                        "subject": subject,
                        "passages": [p.to_dict() for p in self.passages_by_tuple[(rid, subject)]],
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
        for (rid, subject, reason) in self.skipped:
            lines.append(
                json.dumps(
                    {"relation_id": rid, "subject": subject, "skipped": reason},
                    sort_keys=True,
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
        return lines

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.to_lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")


def plan_intervention(
    dataset: Dataset,
    predictions: list[Prediction],
    mode: str,
    seed: int,
    n_passages: int = 20,
) -> InterventionPlan:
    """Fix one passage list per tuple, shared by all of its paraphrases.

    relevant: the tuple's own canonical-template retrieval. irr_cohesive: the
    canonical-template retrieval of another subject in the relation.
    irr_incohesive: a fresh uniform sample from every passage retrieved in
    the run.
    """
    if mode not in INTERVENTION_MODES:
        raise ConfigurationError(f"unknown intervention mode {mode!r}")
    index = {p.key: p for p in predictions}
    plan = InterventionPlan(mode=mode, seed=seed, n_passages=n_passages, passages_by_tuple={})

    pool: list[Passage] = []
    if mode == "irr_incohesive":
        seen: dict[str, Passage] = {}
        for p in predictions:
            for passage in p.passages or []:
                seen.setdefault(passage.passage_id, passage)
        pool = [seen[pid] for pid in sorted(seen)]
        if len(pool) < n_passages:
            raise ValidationError(
                f"passage pool has {len(pool)} passages, need {n_passages} for irr_incohesive"
            )

    for rel in dataset.relations:
        rid = rel.relation_id
        lama = rel.spec.lama_index
        donors = {
            t.subject: index.get((rid, t.subject, lama))
            for t in rel.tuples
        }
        donors = {s: p for s, p in donors.items() if p is not None and p.passages}
        for t in rel.tuples:
            subject = t.subject
            if mode == "relevant":
                donor = donors.get(subject)
                if donor is None:
                    plan.skipped.append((rid, subject, "no baseline retrieval"))
                    continue
                plan.passages_by_tuple[(rid, subject)] = list(donor.passages)
            elif mode == "irr_cohesive":
                others = sorted(s for s in donors if s != subject)
                if not others:
                    plan.skipped.append((rid, subject, "no other subject in relation"))
                    continue
                rng = derive_rng(seed, "cohesive", rid, subject)
                donor = donors[others[rng.randrange(len(others))]]
                plan.passages_by_tuple[(rid, subject)] = list(donor.passages)
            else:
                rng = derive_rng(seed, "incohesive", rid, subject)
                plan.passages_by_tuple[(rid, subject)] = rng.sample(pool, n_passages)
    return plan


def run_intervention(
    dataset: Dataset,
    plan: InterventionPlan,
    endpoint,
    cache_path: Path | str,
    *,
    seed: int,
    batch_size: int = 32,
    max_in_flight: int = 4,
) -> list[Prediction]:
    from .runner import run_scorer

    return run_scorer(
        dataset,
        endpoint,
        cache_path,
        seed=seed,
        n_passages=plan.n_passages,
        want_retrieval=False,
        batch_size=batch_size,
        max_in_flight=max_in_flight,
        forced=plan.query_map(dataset),
        intervention=plan.mode,
        plan_digest=plan.digest(),
    )


# -- frequency ranks ----------------------------------------------------------


@dataclass
class RankRecord:
    relation_id: str
    subject: str
    template_index: int
    pred_rank: float
    gold_rank: float
    candidate_frequencies: dict[str, int]


def normalized_rank(frequencies: dict[str, int], candidate: str) -> float:
    """Descending fractional rank scaled to [0, 1]; 0 is the top candidate."""
    count = frequencies[candidate]
    higher = sum(1 for c in frequencies.values() if c > count)
    ties = sum(1 for c in frequencies.values() if c == count)
    rank = higher + (ties + 1) / 2  # 1-based mean position of the tie block
    n = len(frequencies)
    return (rank - 1) / (n - 1) if n > 1 else 0.0


def frequency_rank(
    prediction: Prediction, candidates: list[str] | tuple[str, ...], gold: str
) -> RankRecord:
    freqs = term_frequencies([p.text for p in prediction.passages or []], list(candidates))
    return RankRecord(
        relation_id=prediction.relation_id,
        subject=prediction.subject,
        template_index=prediction.template_index,
        pred_rank=normalized_rank(freqs, prediction.chosen),
        gold_rank=normalized_rank(freqs, gold),
        candidate_frequencies=freqs,
    )


def annotate_ranks(pair_set: PairSet, predictions: list[Prediction], dataset: Dataset) -> None:
    """Fill pred/gold mean ranks on every pair whose predictions carry passages."""
    index = {p.key: p for p in predictions}
    golds = {
        (rel.relation_id, t.subject): t.object_gold
        for rel in dataset.relations
        for t in rel.tuples
    }
    candidates = {rel.relation_id: rel.spec.candidates for rel in dataset.relations}
    ranks: dict[Key, RankRecord] = {}

    def rank_of(key: Key) -> RankRecord | None:
        if key in ranks:
            return ranks[key]
        pred = index.get(key)
        if pred is None or not pred.passages:
            return None
        rec = frequency_rank(pred, candidates[key[0]], golds[(key[0], key[1])])
        ranks[key] = rec
        return rec

    for pairs in pair_set.pairs.values():
        for pair in pairs:
            ri = rank_of((pair.relation_id, pair.subject, pair.template_i))
            rj = rank_of((pair.relation_id, pair.subject, pair.template_j))
            if ri is None or rj is None:
                continue
            pair.pred_rank_mean = (ri.pred_rank + rj.pred_rank) / 2
            pair.gold_rank_mean = (ri.gold_rank + rj.gold_rank) / 2


# -- reports ------------------------------------------------------------------


@dataclass
class SimilarityCell:
    mu: MacroStat
    sigma: MacroStat


def _per_relation_mean_std(
    samples: dict[str, list[float]]
) -> tuple[dict[str, float], dict[str, float]]:
    means, stds = {}, {}
    for rid, values in samples.items():
        if not values:
            continue
        stat = macro(values)
        means[rid], stds[rid] = stat.mean, stat.std
    return means, stds


def _metric_samples(
    per_relation: dict[str, list[RetrieverPairMetrics]], attr: str
) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for rid, metrics in per_relation.items():
        values = [getattr(m, attr) for m in metrics if getattr(m, attr) is not None]
        if values:
            out[rid] = values
    return out


METRIC_ATTRS = (("id", "id_overlap"), ("title", "title_overlap"), ("emb", "embedding_similarity"))


def similarity_summary(
    per_relation: dict[str, list[RetrieverPairMetrics]]
) -> dict[str, SimilarityCell]:
    """Distribution (over relations) of per-relation mean and std, per metric."""
    out = {}
    for label, attr in METRIC_ATTRS:
        means, stds = _per_relation_mean_std(_metric_samples(per_relation, attr))
        out[label] = SimilarityCell(mu=macro(list(means.values())), sigma=macro(list(stds.values())))
    return out


def pair_metrics_by_relation(pair_set: PairSet) -> dict[str, list[RetrieverPairMetrics]]:
    out: dict[str, list[RetrieverPairMetrics]] = {}
    for rid, pairs in pair_set.pairs.items():
        metrics = [
            RetrieverPairMetrics(
                id_overlap=p.id_overlap,
                title_overlap=p.title_overlap,
                embedding_similarity=p.embedding_similarity,
            )
            for p in pairs
            if p.id_overlap is not None
        ]
        if metrics:
            out[rid] = metrics
    return out


def match_stratified_summary(pair_set: PairSet) -> dict[str, dict[str, MacroStat]]:
    """Mean retrieval agreement split by whether the prediction pair matched."""
    out: dict[str, dict[str, MacroStat]] = {}
    for label, attr in METRIC_ATTRS:
        cells = {}
        for stratum, keep in (("match", True), ("no_match", False)):
            per_rel: dict[str, list[float]] = {}
            for rid, pairs in pair_set.pairs.items():
                values = [
                    getattr(p, attr)
                    for p in pairs
                    if p.agree == keep and getattr(p, attr) is not None
                ]
                if values:
                    per_rel[rid] = values
            means, _ = _per_relation_mean_std(per_rel)
            cells[stratum] = macro(list(means.values()))
        out[label] = cells
    return out


def metric_correlation_matrix(
    baseline: BaselineSamples,
) -> dict[str, dict[str, MacroStat]]:
    """Pearson between agreement metrics, per relation then macro-averaged."""
    labels = [label for label, _ in METRIC_ATTRS]
    per_cell: dict[tuple[str, str], list[float]] = {
        (a, b): [] for a in labels for b in labels
    }
    for rid, metrics in baseline.per_relation.items():
        series = {
            label: [getattr(m, attr) for m in metrics]
            for label, attr in METRIC_ATTRS
        }
        for a in labels:
            for b in labels:
                if a == b:
                    continue
                xs, ys = [], []
                for x, y in zip(series[a], series[b]):
                    if x is None or y is None:
                        continue
                    xs.append(x)
                    ys.append(y)
                r = pearson(xs, ys) if len(xs) >= 2 else None
                if r is not None:
                    per_cell[(a, b)].append(r)
    n_relations = len(baseline.per_relation)
    matrix: dict[str, dict[str, MacroStat]] = {}
    for a in labels:
        matrix[a] = {}
        for b in labels:
            if a == b:
                matrix[a][b] = MacroStat(mean=1.0, std=0.0, n=n_relations)
            else:
                matrix[a][b] = macro(per_cell[(a, b)])
    return matrix


@dataclass
class RankReport:
    cells: dict[str, dict[str, MacroStat]]  # pred/gold -> rank/match/no_match
    correlations: dict[str, MacroStat]  # pred/gold -> pearson(agree, mean rank)


def rank_consistency_report(pair_set: PairSet) -> RankReport:
    cells: dict[str, dict[str, MacroStat]] = {}
    correlations: dict[str, MacroStat] = {}
    for label, attr in (("pred", "pred_rank_mean"), ("gold", "gold_rank_mean")):
        per_rel_overall: dict[str, float] = {}
        per_rel_match: dict[str, float] = {}
        per_rel_nomatch: dict[str, float] = {}
        per_rel_corr: list[float] = []
        for rid, pairs in pair_set.pairs.items():
            annotated = [p for p in pairs if getattr(p, attr) is not None]
            if not annotated:
                continue
            per_rel_overall[rid] = macro([getattr(p, attr) for p in annotated]).mean
            match = [getattr(p, attr) for p in annotated if p.agree]
            nomatch = [getattr(p, attr) for p in annotated if not p.agree]
            if match:
                per_rel_match[rid] = macro(match).mean
            if nomatch:
                per_rel_nomatch[rid] = macro(nomatch).mean
            r = pearson(
                [1.0 if p.agree else 0.0 for p in annotated],
                [getattr(p, attr) for p in annotated],
            )
            if r is not None:
                per_rel_corr.append(r)
        cells[label] = {
            "rank": macro(list(per_rel_overall.values())),
            "match": macro(list(per_rel_match.values())),
            "no_match": macro(list(per_rel_nomatch.values())),
        }
        correlations[label] = macro(per_rel_corr)
    return RankReport(cells=cells, correlations=correlations)
