"""Consistency statistics over prediction sets.

Per relation: pairwise agreement pooled over tuples (micro), accuracy on the
canonical template, all-prompts-correct rate, and the knowledgeable /
unknowledgeable split. Across relations: unweighted mean with population
standard deviation (macro). Tuples with missing predictions are excluded
and surfaced as diagnostics rather than counted as wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import fmean, pstdev

from .corpus import Dataset, RelationData
from .protocol import Prediction


@dataclass
class TupleOutcome:
    relation_id: str
    subject: str
    gold: str
    answers: dict[int, str]

    def correct(self, template_index: int) -> bool:
        return self.answers.get(template_index) == self.gold

    @property
    def any_correct(self) -> bool:
        return any(ans == self.gold for ans in self.answers.values())


@dataclass
class PairRecord:
    relation_id: str
    subject: str
    template_i: int
    template_j: int
    agree: bool
    correct_i: bool
    correct_j: bool
    id_overlap: float | None = None
    title_overlap: float | None = None
    embedding_similarity: float | None = None
    pred_rank_mean: float | None = None
    gold_rank_mean: float | None = None


@dataclass
class PairDiagnostics:
    tuples_seen: int = 0
    tuples_included: int = 0
    tuples_excluded: int = 0  # fewer than two template predictions
    tuples_incomplete: int = 0  # some but not all templates predicted
    missing_lama: int = 0


@dataclass
class PairSet:
    outcomes: dict[str, list[TupleOutcome]] = field(default_factory=dict)
    pairs: dict[str, list[PairRecord]] = field(default_factory=dict)
    diagnostics: dict[str, PairDiagnostics] = field(default_factory=dict)

    def all_pairs(self) -> list[PairRecord]:
        out: list[PairRecord] = []
        for rid in self.pairs:
            out.extend(self.pairs[rid])
        return out


def build_pair_set(dataset: Dataset, predictions: list[Prediction]) -> PairSet:
    index: dict[tuple[str, str, int], Prediction] = {p.key: p for p in predictions}
    result = PairSet()
    for rel in dataset.relations:
        n_templates = len(rel.spec.templates)
        diag = PairDiagnostics()
        outcomes: list[TupleOutcome] = []
        pairs: list[PairRecord] = []
        for t in rel.tuples:
            diag.tuples_seen += 1
            answers = {
                idx: index[(rel.relation_id, t.subject, idx)].chosen
                for idx in range(n_templates)
                if (rel.relation_id, t.subject, idx) in index
            }
            if len(answers) < 2:
                diag.tuples_excluded += 1
                continue
            if len(answers) < n_templates:
                diag.tuples_incomplete += 1
            diag.tuples_included += 1
            if rel.spec.lama_index not in answers:
                diag.missing_lama += 1
            outcome = TupleOutcome(
                relation_id=rel.relation_id, subject=t.subject, gold=t.object_gold, answers=answers
            )
            outcomes.append(outcome)
            present = sorted(answers)
            for a in range(len(present)):
                for b in range(a + 1, len(present)):
                    i, j = present[a], present[b]
                    pairs.append(
                        PairRecord(
                            relation_id=rel.relation_id,
                            subject=t.subject,
                            template_i=i,
                            template_j=j,
                            agree=answers[i] == answers[j],
                            correct_i=answers[i] == t.object_gold,
                            correct_j=answers[j] == t.object_gold,
                        )
                    )
        result.outcomes[rel.relation_id] = outcomes
        result.pairs[rel.relation_id] = pairs
        result.diagnostics[rel.relation_id] = diag
    return result


def relation_consistency(pairs: list[PairRecord]) -> float | None:
    if not pairs:
        return None
    return sum(1 for p in pairs if p.agree) / len(pairs)


def accuracy_lama(relation: RelationData, outcomes: list[TupleOutcome]) -> float | None:
    lama = relation.spec.lama_index
    scored = [o for o in outcomes if lama in o.answers]
    if not scored:
        return None
    return sum(1 for o in scored if o.correct(lama)) / len(scored)


def consistent_and_accurate(
    relation: RelationData, outcomes: list[TupleOutcome]
) -> float | None:
    n_templates = len(relation.spec.templates)
    complete = [o for o in outcomes if len(o.answers) == n_templates]
    if not complete:
        return None
    good = sum(
        1 for o in complete if all(ans == o.gold for ans in o.answers.values())
    )
    return good / len(complete)


@dataclass
class KnowledgeMetrics:
    know_cons: float | None
    k_know_cons: float | None
    unk_cons: float | None
    n_knowledgeable: int
    n_unknowledgeable: int


def knowledge_partition(
    outcomes: list[TupleOutcome], pairs: list[PairRecord]
) -> KnowledgeMetrics:
    knowledgeable = {o.subject for o in outcomes if o.any_correct}
    know_pairs = [p for p in pairs if p.subject in knowledgeable]
    unk_pairs = [p for p in pairs if p.subject not in knowledgeable]
    k_know = None
    if know_pairs:
        k_know = sum(1 for p in know_pairs if p.correct_i and p.correct_j) / len(know_pairs)
    return KnowledgeMetrics(
        know_cons=relation_consistency(know_pairs),
        k_know_cons=k_know,
        unk_cons=relation_consistency(unk_pairs),
        n_knowledgeable=len(knowledgeable),
        n_unknowledgeable=len(outcomes) - len(knowledgeable),
    )


@dataclass
class RelationMetrics:
    relation_id: str
    n_tuples: int
    n_pairs: int
    consistency: float | None
    accuracy: float | None
    consistent_and_accurate: float | None
    know_cons: float | None
    k_know_cons: float | None
    unk_cons: float | None
    n_knowledgeable: int
    n_unknowledgeable: int

    METRIC_FIELDS = (
        "consistency",
        "accuracy",
        "consistent_and_accurate",
        "know_cons",
        "k_know_cons",
        "unk_cons",
    )


@dataclass
class MacroStat:
    mean: float | None
    std: float | None
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


def macro(values: list[float]) -> MacroStat:
    """Unweighted mean with population standard deviation across relations."""
    if not values:
        return MacroStat(mean=None, std=None, n=0)
    return MacroStat(mean=fmean(values), std=pstdev(values), n=len(values))


@dataclass
class EvaluationSummary:
    per_relation: list[RelationMetrics]
    macro_stats: dict[str, MacroStat]
    diagnostics: dict[str, PairDiagnostics]

    def macro_of(self, metric: str) -> MacroStat:
        return self.macro_stats[metric]


def compute_relation_metrics(relation: RelationData, pair_set: PairSet) -> RelationMetrics:
    rid = relation.relation_id
    outcomes = pair_set.outcomes.get(rid, [])
    pairs = pair_set.pairs.get(rid, [])
    know = knowledge_partition(outcomes, pairs)
    return RelationMetrics(
        relation_id=rid,
        n_tuples=len(outcomes),
        n_pairs=len(pairs),
        consistency=relation_consistency(pairs),
        accuracy=accuracy_lama(relation, outcomes),
        consistent_and_accurate=consistent_and_accurate(relation, outcomes),
        know_cons=know.know_cons,
        k_know_cons=know.k_know_cons,
        unk_cons=know.unk_cons,
        n_knowledgeable=know.n_knowledgeable,
        n_unknowledgeable=know.n_unknowledgeable,
    )


def evaluate(
    dataset: Dataset, predictions: list[Prediction], pair_set: PairSet | None = None
) -> EvaluationSummary:
    if pair_set is None:
        pair_set = build_pair_set(dataset, predictions)
    rows = [compute_relation_metrics(rel, pair_set) for rel in dataset.relations]
    macros = {
        name: macro([v for r in rows if (v := getattr(r, name)) is not None])
        for name in RelationMetrics.METRIC_FIELDS
    }
    return EvaluationSummary(per_relation=rows, macro_stats=macros, diagnostics=pair_set.diagnostics)


def pearson(x: list[float], y: list[float]) -> float | None:
    """Product-moment correlation; absent (None) for constant series."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        return None
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy / math.sqrt(sxx * syy)


# -- stratification ----------------------------------------------------------


@dataclass
class StratumCell:
    stat: MacroStat
    per_relation: dict[str, float]


@dataclass
class StratTable:
    name: str
    relation_ids: list[str]
    strata: dict[str, StratumCell]
    fallback_all_relations: bool = False


def _macro_cell(values_by_relation: dict[str, float]) -> StratumCell:
    return StratumCell(stat=macro(list(values_by_relation.values())), per_relation=values_by_relation)


def _split_table(
    name: str,
    dataset: Dataset,
    pair_set: PairSet,
    relation_filter,
    classify,
    strata_names: tuple[str, ...],
) -> StratTable:
    subset = [rel for rel in dataset.relations if relation_filter(rel)]
    fallback = not subset
    if fallback:
        subset = list(dataset.relations)
    per_stratum: dict[str, dict[str, float]] = {s: {} for s in strata_names}
    for rel in subset:
        rid = rel.relation_id
        buckets: dict[str, list[PairRecord]] = {s: [] for s in strata_names}
        for pair in pair_set.pairs.get(rid, []):
            buckets[classify(rel, pair)].append(pair)
        for s in strata_names:
            value = relation_consistency(buckets[s])
            if value is not None:
                per_stratum[s][rid] = value
    return StratTable(
        name=name,
        relation_ids=[r.relation_id for r in subset],
        strata={s: _macro_cell(per_stratum[s]) for s in strata_names},
        fallback_all_relations=fallback,
    )


def stratified_consistency(dataset: Dataset, pair_set: PairSet) -> dict[str, StratTable]:
    """The four evaluation-format splits, each over its flagged relations.

    When no relation carries the relevant flag the split runs over all
    relations, so unflagged datasets still report the unaffected column.
    """
    overlap_by_rel = {
        rel.relation_id: {t.subject for t in rel.tuples if t.subj_obj_overlap}
        for rel in dataset.relations
    }
    gold_by_rel = {
        rel.relation_id: {t.subject: t.object_gold for t in rel.tuples}
        for rel in dataset.relations
    }

    def classify_subj_obj(rel: RelationData, pair: PairRecord) -> str:
        return "affected" if pair.subject in overlap_by_rel[rel.relation_id] else "not_affected"

    def classify_object(rel: RelationData, pair: PairRecord) -> str:
        gold = gold_by_rel[rel.relation_id].get(pair.subject)
        return "affected" if gold in rel.spec.unidiomatic_objects else "not_affected"

    def classify_template(rel: RelationData, pair: PairRecord) -> str:
        flags = rel.spec.templates
        n_bad = int(flags[pair.template_i].unidiomatic) + int(flags[pair.template_j].unidiomatic)
        return ("none", "one", "both")[n_bad]

    tables = {
        "subject_object_similarity": _split_table(
            "subject_object_similarity",
            dataset,
            pair_set,
            lambda rel: rel.spec.subj_obj_prone,
            classify_subj_obj,
            ("affected", "not_affected"),
        ),
        "unidiomatic_object": _split_table(
            "unidiomatic_object",
            dataset,
            pair_set,
            lambda rel: bool(rel.spec.unidiomatic_objects),
            classify_object,
            ("affected", "not_affected"),
        ),
        "unidiomatic_template": _split_table(
            "unidiomatic_template",
            dataset,
            pair_set,
            lambda rel: rel.spec.has_unidiomatic_template,
            classify_template,
            ("both", "one", "none"),
        ),
    }

    flagged: dict[str, float] = {}
    unflagged: dict[str, float] = {}
    for rel in dataset.relations:
        value = relation_consistency(pair_set.pairs.get(rel.relation_id, []))
        if value is None:
            continue
        (flagged if rel.spec.semantic_overlap else unflagged)[rel.relation_id] = value
    tables["semantic_overlap"] = StratTable(
        name="semantic_overlap",
        relation_ids=[r.relation_id for r in dataset.relations],
        strata={"overlap": _macro_cell(flagged), "no_overlap": _macro_cell(unflagged)},
    )
    return tables
