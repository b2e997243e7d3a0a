"""Dataset model: relation specs with paraphrase templates, fact tuples, curation.

Canonical on-disk format is one JSONL file per relation: the first line is
the relation header (id, name, templates, candidates, flags), every further
line one {"subject", "object"} fact. Cloze prompts use "[X]" for the subject
slot and "[Y]" for the answer slot; rendered queries carry the mask marker
in place of "[Y]".
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ValidationError
from .text import stem_set

SUBJECT_SLOT = "[X]"
ANSWER_SLOT = "[Y]"
MASK_TOKEN = "[MASK]"

DEFAULT_DROP_THRESHOLD = 0.20


@dataclass(frozen=True)
class Template:
    pattern: str
    lama_original: bool = False
    unidiomatic: bool = False

    def validate(self) -> None:
        for slot in (SUBJECT_SLOT, ANSWER_SLOT):
            if self.pattern.count(slot) != 1:
                raise ValidationError(
                    f"template pattern must contain {slot} exactly once: {self.pattern!r}"
                )

    def render(self, subject: str, answer: str) -> str:
        """Substitute positionally on the template, never inside the values."""
        ix = self.pattern.find(SUBJECT_SLOT)
        iy = self.pattern.find(ANSWER_SLOT)
        if ix < iy:
            head, mid, tail = self.pattern[:ix], self.pattern[ix + 3 : iy], self.pattern[iy + 3 :]
            return f"{head}{subject}{mid}{answer}{tail}"
        head, mid, tail = self.pattern[:iy], self.pattern[iy + 3 : ix], self.pattern[ix + 3 :]
        return f"{head}{answer}{mid}{subject}{tail}"


@dataclass(frozen=True)
class RelationSpec:
    relation_id: str
    name: str
    templates: tuple[Template, ...]
    candidates: tuple[str, ...]
    semantic_overlap: bool = False
    subj_obj_prone: bool = False
    unidiomatic_objects: frozenset[str] = frozenset()

    def validate(self) -> None:
        if not self.candidates:
            raise ValidationError(f"{self.relation_id}: candidate set is empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValidationError(f"{self.relation_id}: duplicate candidates")
        if not self.templates:
            raise ValidationError(f"{self.relation_id}: no templates")
        n_lama = sum(1 for t in self.templates if t.lama_original)
        if n_lama != 1:
            raise ValidationError(
                f"{self.relation_id}: expected exactly one lama_original template, got {n_lama}"
            )
        for t in self.templates:
            t.validate()
        stray = self.unidiomatic_objects - set(self.candidates)
        if stray:
            raise ValidationError(
                f"{self.relation_id}: unidiomatic_objects not in candidates: {sorted(stray)}"
            )

    @property
    def lama_index(self) -> int:
        return next(i for i, t in enumerate(self.templates) if t.lama_original)

    @property
    def has_unidiomatic_template(self) -> bool:
        return any(t.unidiomatic for t in self.templates)


@dataclass(frozen=True)
class FactTuple:
    subject: str
    relation_id: str
    object_gold: str
    subj_obj_overlap: bool = False


@dataclass(frozen=True)
class Query:
    relation_id: str
    subject: str
    template_index: int
    prompt: str

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.relation_id, self.subject, self.template_index)


@dataclass
class RelationData:
    spec: RelationSpec
    tuples: list[FactTuple]

    @property
    def relation_id(self) -> str:
        return self.spec.relation_id

    def subjects(self) -> list[str]:
        return [t.subject for t in self.tuples]


@dataclass
class Dataset:
    relations: list[RelationData]

    def __iter__(self):
        return iter(self.relations)

    def __len__(self) -> int:
        return len(self.relations)

    def get(self, relation_id: str) -> RelationData:
        for rel in self.relations:
            if rel.relation_id == relation_id:
                return rel
        raise KeyError(relation_id)

    def total_tuples(self) -> int:
        return sum(len(r.tuples) for r in self.relations)

    def digest(self) -> str:
        h = hashlib.sha256()
        for rel in sorted(self.relations, key=lambda r: r.relation_id):
            h.update(_canonical_json(_header_dict(rel.spec)).encode("utf-8"))
            for t in rel.tuples:
                h.update(_canonical_json({"subject": t.subject, "object": t.object_gold}).encode("utf-8"))
        return h.hexdigest()


@dataclass
class RelationCuration:
    relation_id: str
    name: str
    entries: int
    duplicates: int
    exact_duplicates: int
    retained: int
    dropped: bool

    @property
    def duplicate_rate(self) -> float:
        return self.duplicates / self.entries if self.entries else 0.0


@dataclass
class CurationReport:
    drop_threshold: float
    rows: list[RelationCuration] = field(default_factory=list)

    @property
    def relations_in(self) -> int:
        return len(self.rows)

    @property
    def relations_retained(self) -> int:
        return sum(1 for r in self.rows if not r.dropped)

    @property
    def tuples_in(self) -> int:
        return sum(r.entries for r in self.rows)

    @property
    def tuples_retained(self) -> int:
        return sum(r.retained for r in self.rows if not r.dropped)

    @property
    def tuples_removed(self) -> int:
        return self.tuples_in - self.tuples_retained

    def to_dict(self) -> dict:
        return {
            "drop_threshold": self.drop_threshold,
            "relations_in": self.relations_in,
            "relations_retained": self.relations_retained,
            "tuples_in": self.tuples_in,
            "tuples_retained": self.tuples_retained,
            "tuples_removed": self.tuples_removed,
            "relations": [
                {
                    "relation_id": r.relation_id,
                    "name": r.name,
                    "entries": r.entries,
                    "duplicates": r.duplicates,
                    "exact_duplicates": r.exact_duplicates,
                    "retained": r.retained,
                    "dropped": r.dropped,
                }
                for r in self.rows
            ],
        }


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _header_dict(spec: RelationSpec) -> dict:
    return {
        "relation_id": spec.relation_id,
        "name": spec.name,
        "templates": [
            {"pattern": t.pattern, "lama_original": t.lama_original, "unidiomatic": t.unidiomatic}
            for t in spec.templates
        ],
        "candidates": list(spec.candidates),
        "flags": {"semantic_overlap": spec.semantic_overlap, "subj_obj_prone": spec.subj_obj_prone},
        "unidiomatic_objects": sorted(spec.unidiomatic_objects),
    }


def _spec_from_header(obj: dict, where: str) -> RelationSpec:
    try:
        templates = tuple(
            Template(
                pattern=t["pattern"],
                lama_original=bool(t.get("lama_original", False)),
                unidiomatic=bool(t.get("unidiomatic", False)),
            )
            for t in obj["templates"]
        )
        flags = obj.get("flags", {})
        spec = RelationSpec(
            relation_id=obj["relation_id"],
            name=obj.get("name", obj["relation_id"]),
            templates=templates,
            candidates=tuple(obj["candidates"]),
            semantic_overlap=bool(flags.get("semantic_overlap", False)),
            subj_obj_prone=bool(flags.get("subj_obj_prone", False)),
            unidiomatic_objects=frozenset(obj.get("unidiomatic_objects", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{where}: malformed relation header ({exc})") from exc
    spec.validate()
    return spec


def compute_subject_object_overlap(subject: str, object_gold: str) -> bool:
    """True iff any stemmed object token matches a stemmed subject token."""
    return bool(stem_set(object_gold) & stem_set(subject))


def parse_relation_file(path: Path) -> RelationData:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty relation file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:1: invalid JSON header ({exc.msg})") from exc
    spec = _spec_from_header(header, f"{path}:1")
    candidates = set(spec.candidates)
    tuples: list[FactTuple] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: invalid JSON record ({exc.msg})") from exc
        try:
            subject, obj = rec["subject"], rec["object"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: record needs subject and object") from exc
        if not subject or not obj:
            raise ValidationError(f"{path}:{lineno}: empty subject or object")
        if obj not in candidates:
            raise ValidationError(
                f"{path}:{lineno}: object {obj!r} not in candidates of {spec.relation_id}"
            )
        tuples.append(
            FactTuple(
                subject=subject,
                relation_id=spec.relation_id,
                object_gold=obj,
                subj_obj_overlap=compute_subject_object_overlap(subject, obj),
            )
        )
    return RelationData(spec=spec, tuples=tuples)


def load_dataset(path: Path | str) -> Dataset:
    path = Path(path)
    if not path.is_dir():
        raise ValidationError(f"{path}: not a dataset directory")
    files = sorted(path.glob("*.jsonl"))
    if not files:
        raise ValidationError(f"{path}: no relation files (*.jsonl) found")
    return Dataset([parse_relation_file(f) for f in files])


def save_dataset(dataset: Dataset, out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rel in dataset.relations:
        path = out_dir / f"{rel.relation_id}.jsonl"
        lines = [_canonical_json(_header_dict(rel.spec))]
        lines += [
            _canonical_json({"subject": t.subject, "object": t.object_gold}) for t in rel.tuples
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def deduplicate(
    dataset: Dataset, drop_threshold: float = DEFAULT_DROP_THRESHOLD
) -> tuple[Dataset, CurationReport]:
    """Remove every fact whose (subject, relation) key occurs more than once.

    All instances of a repeated key go, exact duplicates included. Relations
    whose duplicate-instance fraction exceeds drop_threshold leave the
    dataset entirely; emptied relations stay, with zero tuples.
    """
    if not (0.0 < drop_threshold < 1.0):
        raise ValidationError(f"drop_threshold must be in (0,1), got {drop_threshold}")
    report = CurationReport(drop_threshold=drop_threshold)
    curated: list[RelationData] = []
    for rel in dataset.relations:
        by_subject: dict[str, list[FactTuple]] = {}
        for t in rel.tuples:
            by_subject.setdefault(t.subject, []).append(t)
        duplicates = 0
        exact = 0
        kept: list[FactTuple] = []
        for group in by_subject.values():
            if len(group) == 1:
                kept.append(group[0])
                continue
            duplicates += len(group)
            per_object: dict[str, int] = {}
            for t in group:
                per_object[t.object_gold] = per_object.get(t.object_gold, 0) + 1
            exact += sum(c - 1 for c in per_object.values() if c > 1)
        # kept tuples are singleton keys, so insertion order == dataset order
        entries = len(rel.tuples)
        rate = duplicates / entries if entries else 0.0
        dropped = rate > drop_threshold
        report.rows.append(
            RelationCuration(
                relation_id=rel.relation_id,
                name=rel.spec.name,
                entries=entries,
                duplicates=duplicates,
                exact_duplicates=exact,
                retained=0 if dropped else len(kept),
                dropped=dropped,
            )
        )
        if not dropped:
            curated.append(RelationData(spec=rel.spec, tuples=kept))
    return Dataset(curated), report


def render_queries(
    relation: RelationData, mask_token: str = MASK_TOKEN
) -> list[Query]:
    """One query per tuple x template, tuple-major, deterministic order."""
    out = []
    for t in relation.tuples:
        for idx, tpl in enumerate(relation.spec.templates):
            out.append(
                Query(
                    relation_id=relation.relation_id,
                    subject=t.subject,
                    template_index=idx,
                    prompt=tpl.render(t.subject, mask_token),
                )
            )
    return out


def render_all(dataset: Dataset, mask_token: str = MASK_TOKEN) -> list[Query]:
    out: list[Query] = []
    for rel in dataset.relations:
        out.extend(render_queries(rel, mask_token))
    return out


def recompute_overlap_flags(dataset: Dataset) -> Dataset:
    """Refresh the computed subj/obj overlap flag on every tuple."""
    rels = []
    for rel in dataset.relations:
        rels.append(
            RelationData(
                spec=rel.spec,
                tuples=[
                    replace(t, subj_obj_overlap=compute_subject_object_overlap(t.subject, t.object_gold))
                    for t in rel.tuples
                ],
            )
        )
    return Dataset(rels)
