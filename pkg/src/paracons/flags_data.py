"""Reference quality annotations for the 30-relation Wikidata cloze benchmark.

These are manual labels shipped as static data, never recomputed: which
relations have semantically overlapping answer options, which templates read
unidiomatically, which answer strings are unnatural inside the templates,
and which relations are prone to subject/object stem overlap.
"""

from __future__ import annotations

from dataclasses import replace

from .corpus import Dataset, RelationData, RelationSpec

SEMANTIC_OVERLAP_RELATIONS = frozenset(
    {"P19", "P20", "P101", "P106", "P131", "P140", "P159", "P276", "P279", "P361", "P740", "P937"}
)

SUBJ_OBJ_PRONE_RELATIONS = frozenset(
    {"P36", "P127", "P131", "P138", "P176", "P178", "P276", "P279", "P361"}
)

UNIDIOMATIC_TEMPLATES: dict[str, frozenset[str]] = {
    "P19": frozenset({"[X] is native to [Y].", "[X] was native to [Y]."}),
    "P20": frozenset(
        {
            "[X] died at [Y].",
            "[X] passed away at [Y].",
            "[X] lost their life at [Y].",
            "[X] succumbed at [Y].",
        }
    ),
    "P27": frozenset({"[X] is [Y] citizen."}),
    "P106": frozenset(
        {
            "[X] works as [Y].",
            "[X], who works as [Y].",
            "[X]'s occupation is [Y]",
            "the occupation of [X] is [Y].",
            "the profession of [X] is [Y].",
        }
    ),
    "P138": frozenset(
        {
            "[X] is named in [Y]'s honor.",
            "[X] was named in [Y]'s honor.",
            "[X], named in [Y]'s honor.",
            "[X], which is named in [Y]'s honor.",
            "[X], which was named in [Y]'s honor.",
        }
    ),
    "P1376": frozenset(
        {
            "[Y]'s capital, [X].",
            "[Y]'s capital city, [X].",
            "[Y]'s capital is [X].",
            "[Y]'s capital city is [X].",
        }
    ),
}

UNIDIOMATIC_OBJECTS: dict[str, frozenset[str]] = {
    "P101": frozenset(
        {
            "Internet", "astronomer", "bird", "car", "cave", "comedian", "diplomat",
            "economist", "habitat", "hotel", "icon", "mathematician", "miniature",
            "musical", "musician", "nightclub", "novelist", "philosopher", "physician",
            "physicist", "priest", "programmer", "stock", "stomach", "virus", "website",
        }
    ),
    "P138": frozenset(
        {
            "Alps", "Americas", "Arctic", "Bible", "Moon", "Netherlands", "Sun",
            "arrow", "backpack", "brake", "canon", "cube", "flower", "glove", "grape",
            "horse", "hotel", "liver", "mayor", "mole", "monastery", "patent",
            "patriarch", "red",
        }
    ),
    "P361": frozenset(
        {
            "Alps", "Americas", "Antarctic", "BBC", "Bible", "Caribbean", "Caucasus",
            "Internet", "Nile", "Quran", "airline", "airport", "ankle", "aquarium",
            "army", "artillery", "atom", "banana", "battery", "bicycle", "bird", "bow",
            "brain", "breast", "bridge", "candle", "car", "cartridge", "castle",
            "cavalry", "cell", "cemetery", "chromosome", "clergy", "cloud", "cocktail",
            "coin", "comet", "computer", "door", "ear", "economist", "ecosystem",
            "engine", "enzyme", "eye", "facade", "film", "firearm", "fish", "fleet",
            "flower", "foot", "forest", "fruit", "galaxy", "gang", "gene", "genome",
            "gospel", "graph", "head", "heart", "kidney", "leaf", "liver", "lung",
            "matrix", "molecule", "mosque", "municipality", "navy", "neck", "nerve",
            "orbit", "organism", "parish", "penis", "perfume", "pistol", "piston",
            "port", "radar", "saddle", "screw", "sea", "seed", "shield", "skeleton",
            "skull", "spacecraft", "stomach", "sword", "track", "trail", "tree",
            "triangle", "turbine", "volcano",
        }
    ),
}


def annotate_spec(spec: RelationSpec) -> RelationSpec:
    """Stamp the reference annotations onto one relation spec.

    Unidiomatic-object labels are intersected with the relation's candidate
    vocabulary so the labels-are-candidates invariant always holds.
    """
    bad_patterns = UNIDIOMATIC_TEMPLATES.get(spec.relation_id, frozenset())
    templates = tuple(
        replace(t, unidiomatic=t.pattern in bad_patterns) for t in spec.templates
    )
    bad_objects = UNIDIOMATIC_OBJECTS.get(spec.relation_id, frozenset()) & set(spec.candidates)
    return replace(
        spec,
        templates=templates,
        semantic_overlap=spec.relation_id in SEMANTIC_OVERLAP_RELATIONS,
        subj_obj_prone=spec.relation_id in SUBJ_OBJ_PRONE_RELATIONS,
        unidiomatic_objects=frozenset(bad_objects),
    )


def apply_reference_flags(dataset: Dataset) -> Dataset:
    return Dataset(
        [RelationData(spec=annotate_spec(rel.spec), tuples=rel.tuples) for rel in dataset.relations]
    )
