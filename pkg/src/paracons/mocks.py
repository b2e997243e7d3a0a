"""Deterministic in-process scorers used for desk-scale verification.

Kinds:
  oracle       -- gold always wins
  hash         -- winner is a pure pseudo-random function of (prompt, candidate, seed)
  parametric   -- gold wins with probability q per paraphrase, else a uniform other
  fixed        -- a named answer always wins
  freq_reader  -- argmax of candidate term frequencies in the passage set

All randomness derives from (seed, relation, subject, template) so results
are independent of batching and request order. Synthetic retrieval draws
each passage slot from a per-tuple canonical set with probability reuse_p,
otherwise from a template-specific alternative; alternative passages in even
slots keep the canonical page title, so title overlap dominates id overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigurationError
from .protocol import Passage, ScoreRequest, ScoreResponse, select_constrained
from .text import derive_rng, derive_unit, term_frequencies

MOCK_KINDS = ("oracle", "hash", "parametric", "fixed", "freq_reader")


@dataclass(frozen=True)
class QueryMeta:
    """Harness-side context for a request; never serialized onto the wire."""

    relation_id: str
    subject: str
    template_index: int
    gold: str


@dataclass
class MockConfig:
    kind: str
    q: float | None = None
    answer: str | None = None
    reuse_p: float = 0.8
    hub: bool = False
    gold_term_count: int = 3
    other_term_count: int = 1
    embedding_dim: int = 16
    embedding_jitter: float = 0.05

    def validate(self) -> None:
        if self.kind not in MOCK_KINDS:
            raise ConfigurationError(f"unknown mock scorer kind {self.kind!r}")
        if self.kind == "parametric":
            if self.q is None or not (0.0 <= self.q <= 1.0):
                raise ConfigurationError("parametric mock requires q in [0,1]")
        if self.kind == "fixed" and not self.answer:
            raise ConfigurationError("fixed mock requires an answer")
        if not (0.0 <= self.reuse_p <= 1.0):
            raise ConfigurationError("reuse_p must be in [0,1]")

    def identity(self) -> str:
        defaults = MockConfig(kind=self.kind)
        params = []
        for f in fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            if value != getattr(defaults, f.name):
                if isinstance(value, bool):
                    value = int(value)
                params.append(f"{f.name}={value}")
        suffix = "?" + "&".join(sorted(params)) if params else ""
        return f"mock:{self.kind}{suffix}"


class MockEndpoint:
    """In-process endpoint; sees query metadata the wire protocol never carries."""

    def __init__(self, config: MockConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        self.identity = config.identity()
        self.batches = 0
        self.requests_scored = 0

    def close(self) -> None:
        pass

    def score_batch(
        self, requests: list[ScoreRequest], metas: list[QueryMeta]
    ) -> list[ScoreResponse]:
        self.batches += 1
        self.requests_scored += len(requests)
        return [self._score(req, meta) for req, meta in zip(requests, metas)]

    # -- scoring -----------------------------------------------------------

    def _score(self, req: ScoreRequest, meta: QueryMeta) -> ScoreResponse:
        cfg = self.config
        forced = req.forced_passages
        passages: list[Passage] | None = None
        if forced is not None:
            passages = list(forced)
        elif req.want_retrieval:
            passages = self._retrieve(meta, req.n_passages, req.candidates)

        if cfg.kind == "freq_reader":
            scores = self._freq_scores(req.candidates, passages or [])
        else:
            winner = self._winner(req, meta)
            scores = [
                -0.5 if c == winner else -4.0 - 0.1 * i for i, c in enumerate(req.candidates)
            ]

        embedding = None
        if req.want_retrieval or forced is not None:
            embedding = self._embedding(meta)

        chosen = select_constrained(scores, req.candidates, req.request_id)
        return ScoreResponse(
            request_id=req.request_id,
            scores=scores,
            passages=passages,
            query_embedding=embedding,
            free_generation=chosen,
            forced_passages_applied=True if forced is not None else None,
        )

    def _winner(self, req: ScoreRequest, meta: QueryMeta) -> str:
        cfg = self.config
        if cfg.kind == "oracle":
            return meta.gold
        if cfg.kind == "fixed":
            return cfg.answer if cfg.answer in req.candidates else req.candidates[0]
        if cfg.kind == "hash":
            draws = {
                c: derive_rng(self.seed, "hash", req.prompt, c).random() for c in req.candidates
            }
            return max(req.candidates, key=lambda c: draws[c])
        # parametric
        rng = derive_rng(self.seed, "param", meta.relation_id, meta.subject, meta.template_index)
        if rng.random() < cfg.q:
            return meta.gold
        others = [c for c in req.candidates if c != meta.gold]
        return rng.choice(others) if others else meta.gold

    def _freq_scores(self, candidates: list[str], passages: list[Passage]) -> list[float]:
        freqs = term_frequencies([p.text for p in passages], candidates)
        return [-1.0 / (1.0 + freqs[c]) for c in candidates]

    # -- synthetic retrieval -----------------------------------------------

    def _retrieve(self, meta: QueryMeta, n_passages: int, candidates: list[str]) -> list[Passage]:
        cfg = self.config
        rel, subj, tidx = meta.relation_id, meta.subject, meta.template_index
        out = []
        for i in range(n_passages):
            if cfg.hub and i == 0:
                out.append(
                    Passage(
                        passage_id=f"hub|{rel}",
                        title=f"{rel} hub",
                        text=f"{rel} hub . shared background passage for relation {rel} .",
                    )
                )
                continue
            reuse = derive_rng(self.seed, "slot", rel, subj, tidx, i).random() < cfg.reuse_p
            if reuse:
                pid = f"{rel}|{subj}|c{i}"
                title = f"{subj}|pg{i // 2}"
            else:
                pid = f"{rel}|{subj}|t{tidx}|a{i}"
                title = f"{subj}|pg{i // 2}" if i % 2 == 0 else f"{subj}|t{tidx}pg{i // 2}"
            out.append(
                Passage(
                    passage_id=pid,
                    title=title,
                    text=self._passage_text(title, meta, i, candidates),
                )
            )
        return out

    def _passage_text(self, title: str, meta: QueryMeta, slot: int, candidates: list[str]) -> str:
        cfg = self.config
        terms = [meta.gold] * cfg.gold_term_count
        for c in candidates:
            if c != meta.gold:
                terms.extend([c] * cfg.other_term_count)
        body = " ".join(terms)
        return f"{title} . {meta.subject} profile {slot} . {body} ."

    def _embedding(self, meta: QueryMeta) -> list[float]:
        cfg = self.config
        base = derive_unit(self.seed, cfg.embedding_dim, "emb-base", meta.relation_id, meta.subject)
        if cfg.embedding_jitter == 0.0:
            return base
        jit = derive_unit(
            self.seed,
            cfg.embedding_dim,
            "emb-jit",
            meta.relation_id,
            meta.subject,
            meta.template_index,
        )
        v = [b + cfg.embedding_jitter * j for b, j in zip(base, jit)]
        norm = sum(x * x for x in v) ** 0.5 or 1.0
        return [x / norm for x in v]
