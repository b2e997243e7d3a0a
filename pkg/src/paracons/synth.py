"""Synthetic desk-scale datasets for exercising the harness without real data.

Candidate vocabularies are disjoint across relations (single tokens keyed by
relation id) so term-frequency and intervention tests have clean ground
truth; subjects never collide with candidates unless overlap is requested.
"""

from __future__ import annotations

from dataclasses import replace

from .corpus import Dataset, FactTuple, RelationData, RelationSpec, Template, compute_subject_object_overlap
from .text import derive_rng

_PHRASES = [
    "is linked to",
    "stays tied to",
    "remains bound to",
    "connects with",
    "maps onto",
    "belongs with",
    "pairs with",
    "aligns with",
]


def _token(relation_id: str) -> str:
    return "".join(ch for ch in relation_id.lower() if ch.isalnum()) or "rel"


def make_relation(
    relation_id: str,
    *,
    name: str | None = None,
    n_templates: int = 4,
    n_candidates: int = 6,
    n_tuples: int = 10,
    seed: int = 0,
    overlap_fraction: float = 0.0,
    unidiomatic_template_indices: tuple[int, ...] = (),
    unidiomatic_object_count: int = 0,
    semantic_overlap: bool = False,
    subj_obj_prone: bool = False,
) -> RelationData:
    rid = _token(relation_id)
    candidates = tuple(f"ans{rid}x{j}" for j in range(n_candidates))
    templates = tuple(
        Template(
            pattern=f"[X] {_PHRASES[i % len(_PHRASES)]} [Y] .",
            lama_original=(i == 0),
            unidiomatic=(i in unidiomatic_template_indices),
        )
        for i in range(n_templates)
    )
    spec = RelationSpec(
        relation_id=relation_id,
        name=name or f"synthetic-{rid}",
        templates=templates,
        candidates=candidates,
        semantic_overlap=semantic_overlap,
        subj_obj_prone=subj_obj_prone,
        unidiomatic_objects=frozenset(candidates[:unidiomatic_object_count]),
    )
    spec.validate()
    rng = derive_rng(seed, "tuples", relation_id)
    n_overlap = round(overlap_fraction * n_tuples)
    tuples = []
    for i in range(n_tuples):
        gold = candidates[rng.randrange(n_candidates)]
        subject = f"{gold} holder{i}" if i < n_overlap else f"subj{rid}n{i}"
        tuples.append(
            FactTuple(
                subject=subject,
                relation_id=relation_id,
                object_gold=gold,
                subj_obj_overlap=compute_subject_object_overlap(subject, gold),
            )
        )
    return RelationData(spec=spec, tuples=tuples)


def make_dataset(
    n_relations: int = 3,
    *,
    seed: int = 0,
    n_templates: int = 4,
    n_candidates: int = 6,
    n_tuples: int = 10,
    **relation_kwargs,
) -> Dataset:
    return Dataset(
        [
            make_relation(
                f"R{i:03d}",
                seed=seed,
                n_templates=n_templates,
                n_candidates=n_candidates,
                n_tuples=n_tuples,
                **relation_kwargs,
            )
            for i in range(n_relations)
        ]
    )


def build_duplication_fixture(
    profile: list[tuple[str, str, int, int, int]], seed: int = 0
) -> Dataset:
    """Uncurated dataset matching a (relation, name, entries, duplicates, exact) profile.

    "duplicates" counts every instance whose (subject, relation) key occurs
    more than once; "exact" counts surplus copies of identical facts. Rows
    where duplicates - 2*exact is odd get one three-object duplicate group.
    """
    relations = []
    for relation_id, name, entries, duplicates, exact in profile:
        if duplicates > entries or exact < 0 or duplicates < 0:
            raise ValueError(f"{relation_id}: inconsistent profile row")
        base = make_relation(
            relation_id, name=name, n_candidates=8, n_tuples=0, seed=seed
        )
        rng = derive_rng(seed, "dup", relation_id)
        cands = base.spec.candidates
        rid = _token(relation_id)
        tuples: list[FactTuple] = []

        def fact(subject: str, gold: str) -> FactTuple:
            return FactTuple(
                subject=subject,
                relation_id=relation_id,
                object_gold=gold,
                subj_obj_overlap=False,
            )

        serial = 0

        def fresh_subject() -> str:
            nonlocal serial
            serial += 1
            return f"subj{rid}n{serial}"

        for _ in range(exact):
            subj, gold = fresh_subject(), rng.choice(cands)
            tuples += [fact(subj, gold), fact(subj, gold)]
        rem = duplicates - 2 * exact
        if rem < 0:
            raise ValueError(f"{relation_id}: exact duplicates exceed duplicate budget")
        if rem % 2 == 1:
            if rem < 3:
                raise ValueError(f"{relation_id}: cannot realize an odd duplicate remainder of {rem}")
            subj = fresh_subject()
            g1, g2, g3 = rng.sample(list(cands), 3)
            tuples += [fact(subj, g1), fact(subj, g2), fact(subj, g3)]
            rem -= 3
        for _ in range(rem // 2):
            subj = fresh_subject()
            g1, g2 = rng.sample(list(cands), 2)
            tuples += [fact(subj, g1), fact(subj, g2)]
        for _ in range(entries - duplicates):
            tuples.append(fact(fresh_subject(), rng.choice(cands)))
        assert len(tuples) == entries
        rng.shuffle(tuples)
        relations.append(replace(base, tuples=tuples))
    return Dataset(relations)
