"""Wire protocol between harness and scorer endpoints, plus answer selection.

One JSON object per line in both directions (stdio-JSONL workers and HTTP
batch bodies share the same shape). Scores are log-likelihoods by
convention, but only their ordering is consumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ProtocolError


@dataclass(frozen=True)
class Passage:
    passage_id: str
    title: str
    text: str

    def to_dict(self) -> dict:
        return {"passage_id": self.passage_id, "title": self.title, "text": self.text}

    @classmethod
    def from_dict(cls, obj: dict) -> "Passage":
        return cls(passage_id=obj["passage_id"], title=obj["title"], text=obj["text"])


@dataclass
class ScoreRequest:
    request_id: str
    prompt: str
    candidates: list[str]
    want_retrieval: bool = False
    n_passages: int = 20
    forced_passages: list[Passage] | None = None

    def to_dict(self) -> dict:
        obj = {
            "request_id": self.request_id,
            "prompt": self.prompt,
            "candidates": self.candidates,
            "want_retrieval": self.want_retrieval,
            "n_passages": self.n_passages,
        }
        if self.forced_passages is not None:
            obj["forced_passages"] = [p.to_dict() for p in self.forced_passages]
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "ScoreRequest":
        forced = obj.get("forced_passages")
        return cls(
            request_id=obj["request_id"],
            prompt=obj["prompt"],
            candidates=list(obj["candidates"]),
            want_retrieval=bool(obj.get("want_retrieval", False)),
            n_passages=int(obj.get("n_passages", 20)),
            forced_passages=None if forced is None else [Passage.from_dict(p) for p in forced],
        )


@dataclass
class ScoreResponse:
    request_id: str
    scores: list[float]
    passages: list[Passage] | None = None
    query_embedding: list[float] | None = None
    free_generation: str | None = None
    forced_passages_applied: bool | None = None

    def to_dict(self) -> dict:
        obj: dict = {"request_id": self.request_id, "scores": self.scores}
        if self.passages is not None:
            obj["passages"] = [p.to_dict() for p in self.passages]
        if self.query_embedding is not None:
            obj["query_embedding"] = self.query_embedding
        if self.free_generation is not None:
            obj["free_generation"] = self.free_generation
        if self.forced_passages_applied is not None:
            obj["forced_passages_applied"] = self.forced_passages_applied
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "ScoreResponse":
        passages = obj.get("passages")
        return cls(
            request_id=obj["request_id"],
            scores=[float(s) for s in obj["scores"]],
            passages=None if passages is None else [Passage.from_dict(p) for p in passages],
            query_embedding=obj.get("query_embedding"),
            free_generation=obj.get("free_generation"),
            forced_passages_applied=obj.get("forced_passages_applied"),
        )

    @classmethod
    def from_json(cls, line: str) -> "ScoreResponse":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable response line: {exc.msg}") from exc
        try:
            return cls.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            rid = obj.get("request_id", "<unknown>") if isinstance(obj, dict) else "<unknown>"
            raise ProtocolError(f"malformed response for request {rid}: {exc}") from exc


@dataclass
class Prediction:
    relation_id: str
    subject: str
    template_index: int
    prompt: str
    chosen: str
    scores: list[float]
    passages: list[Passage] | None = None
    query_embedding: list[float] | None = None
    free_generation: str | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.relation_id, self.subject, self.template_index)

    def to_dict(self) -> dict:
        obj: dict = {
            "relation_id": self.relation_id,
            "subject": self.subject,
            "template_index": self.template_index,
            "prompt": self.prompt,
            "chosen": self.chosen,
            "scores": self.scores,
        }
        if self.passages is not None:
            obj["passages"] = [p.to_dict() for p in self.passages]
        if self.query_embedding is not None:
            obj["query_embedding"] = self.query_embedding
        if self.free_generation is not None:
            obj["free_generation"] = self.free_generation
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "Prediction":
        passages = obj.get("passages")
        return cls(
            relation_id=obj["relation_id"],
            subject=obj["subject"],
            template_index=int(obj["template_index"]),
            prompt=obj["prompt"],
            chosen=obj["chosen"],
            scores=[float(s) for s in obj["scores"]],
            passages=None if passages is None else [Passage.from_dict(p) for p in passages],
            query_embedding=obj.get("query_embedding"),
            free_generation=obj.get("free_generation"),
        )


def select_constrained(scores: list[float], candidates: list[str], request_id: str = "") -> str:
    """Argmax candidate; ties break toward the lowest candidate index."""
    ctx = f" (request {request_id})" if request_id else ""
    if len(scores) != len(candidates):
        raise ProtocolError(
            f"got {len(scores)} scores for {len(candidates)} candidates{ctx}"
        )
    if not candidates:
        raise ProtocolError(f"empty candidate list{ctx}")
    best_idx = 0
    for i, s in enumerate(scores):
        if not math.isfinite(s):
            raise ProtocolError(f"non-finite score at index {i}{ctx}")
        if s > scores[best_idx]:
            best_idx = i
    return candidates[best_idx]


def validate_response(
    request: ScoreRequest, response: ScoreResponse, embedding_dim: int | None = None
) -> None:
    """Raise ProtocolError unless the response honors the request's contract."""
    if response.request_id != request.request_id:
        raise ProtocolError(
            f"response id {response.request_id!r} does not match request {request.request_id!r}"
        )
    if len(response.scores) != len(request.candidates):
        raise ProtocolError(
            f"request {request.request_id}: {len(response.scores)} scores for "
            f"{len(request.candidates)} candidates"
        )
    for s in response.scores:
        if not math.isfinite(s):
            raise ProtocolError(f"request {request.request_id}: non-finite score")
    if response.query_embedding is not None:
        if embedding_dim is not None and len(response.query_embedding) != embedding_dim:
            raise ProtocolError(
                f"request {request.request_id}: embedding dimension "
                f"{len(response.query_embedding)} != {embedding_dim} seen earlier in run"
            )
    if request.forced_passages is not None and response.forced_passages_applied is not True:
        raise ProtocolError(
            f"request {request.request_id}: endpoint did not apply forced passages"
        )


@dataclass
class FreeAgreement:
    """Free-vs-constrained agreement over predictions that carry free output."""

    n_predictions: int = 0
    n_with_free: int = 0
    n_eligible: int = 0
    n_match: int = 0

    @property
    def value(self) -> float | None:
        if self.n_eligible == 0:
            return None
        return self.n_match / self.n_eligible

    def to_dict(self) -> dict:
        return {
            "n_predictions": self.n_predictions,
            "n_with_free": self.n_with_free,
            "n_eligible": self.n_eligible,
            "n_match": self.n_match,
            "agreement": self.value,
        }


def check_free_agreement(
    predictions: list[Prediction], candidates_by_relation: dict[str, tuple[str, ...] | list[str]]
) -> FreeAgreement:
    """Fraction of free generations equal to the constrained choice.

    Only predictions whose free output lands in the relation's candidate set
    enter the denominator; with none eligible the statistic is absent.
    """
    stat = FreeAgreement()
    for pred in predictions:
        stat.n_predictions += 1
        if pred.free_generation is None:
            continue
        stat.n_with_free += 1
        cands = candidates_by_relation.get(pred.relation_id, ())
        if pred.free_generation in cands:
            stat.n_eligible += 1
            if pred.free_generation == pred.chosen:
                stat.n_match += 1
    return stat
