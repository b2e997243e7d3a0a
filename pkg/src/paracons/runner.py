"""Drive a scorer endpoint over a dataset, persisting predictions to a cache.

Batches may be scored concurrently, but responses are validated, selected
and flushed to the cache strictly in query order, so the cache bytes and
the returned prediction list are independent of scheduling. Warm cache
entries are never re-requested; a fully warm run makes no endpoint calls.
"""

from __future__ import annotations

from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

from .cache import CacheHeader, Key, append_predictions, open_cache_for_run
from .corpus import Dataset, render_queries
from .errors import ProtocolError, ValidationError
from .mocks import QueryMeta
from .protocol import Passage, Prediction, ScoreRequest, ScoreResponse, select_constrained, validate_response


@dataclass
class _Task:
    index: int
    key: Key
    request: ScoreRequest
    meta: QueryMeta


def build_tasks(
    dataset: Dataset,
    *,
    n_passages: int,
    want_retrieval: bool,
    forced: dict[Key, list[Passage]] | None = None,
) -> list[_Task]:
    tasks: list[_Task] = []
    for rel in dataset.relations:
        golds = {t.subject: t.object_gold for t in rel.tuples}
        candidates = list(rel.spec.candidates)
        for query in render_queries(rel):
            key = query.key
            if forced is not None and key not in forced:
                continue
            idx = len(tasks)
            tasks.append(
                _Task(
                    index=idx,
                    key=key,
                    request=ScoreRequest(
                        request_id=f"{idx:08d}",
                        prompt=query.prompt,
                        candidates=candidates,
                        want_retrieval=want_retrieval and forced is None,
                        n_passages=n_passages,
                        forced_passages=forced.get(key) if forced is not None else None,
                    ),
                    meta=QueryMeta(
                        relation_id=query.relation_id,
                        subject=query.subject,
                        template_index=query.template_index,
                        gold=golds[query.subject],
                    ),
                )
            )
    return tasks


def run_scorer(
    dataset: Dataset,
    endpoint,
    cache_path: Path | str,
    *,
    seed: int,
    n_passages: int = 20,
    want_retrieval: bool = False,
    batch_size: int = 32,
    max_in_flight: int = 4,
    forced: dict[Key, list[Passage]] | None = None,
    intervention: str | None = None,
    plan_digest: str | None = None,
) -> list[Prediction]:
    if want_retrieval and n_passages < 1:
        raise ValidationError(f"n_passages must be >= 1 when retrieving, got {n_passages}")
    batch_size = max(1, batch_size)
    max_in_flight = max(1, max_in_flight)
    header = CacheHeader(
        endpoint=endpoint.identity,
        seed=seed,
        n_passages=n_passages,
        dataset_digest=dataset.digest(),
        intervention=intervention,
        plan_digest=plan_digest,
    )
    warm = open_cache_for_run(cache_path, header)
    tasks = build_tasks(
        dataset, n_passages=n_passages, want_retrieval=want_retrieval, forced=forced
    )
    pending = [t for t in tasks if t.key not in warm]

    fresh: dict[Key, Prediction] = {}
    if pending:
        fresh = _score_pending(pending, endpoint, cache_path, max_in_flight, batch_size)

    return [warm[t.key] if t.key in warm else fresh[t.key] for t in tasks]


def _score_pending(
    pending: list[_Task],
    endpoint,
    cache_path: Path | str,
    max_in_flight: int,
    batch_size: int,
) -> dict[Key, Prediction]:
    batches = [pending[i : i + batch_size] for i in range(0, len(pending), batch_size)]
    raw: dict[int, ScoreResponse] = {}

    def score(batch: list[_Task]) -> list[tuple[int, ScoreResponse]]:
        responses = endpoint.score_batch([t.request for t in batch], [t.meta for t in batch])
        if len(responses) != len(batch):
            raise ProtocolError(
                f"endpoint returned {len(responses)} responses for a batch of {len(batch)}"
            )
        return [(t.index, resp) for t, resp in zip(batch, responses)]

    fresh: dict[Key, Prediction] = {}
    flushed = 0
    embedding_dim: int | None = None
    to_write: list[Prediction] = []

    def flush_ready() -> None:
        # consume, in query order, every response already collected
        nonlocal flushed, embedding_dim
        while flushed < len(pending) and pending[flushed].index in raw:
            task = pending[flushed]
            resp = raw.pop(task.index)
            validate_response(task.request, resp, embedding_dim)
            if resp.query_embedding is not None and embedding_dim is None:
                embedding_dim = len(resp.query_embedding)
            chosen = select_constrained(resp.scores, task.request.candidates, task.request.request_id)
            pred = Prediction(
                relation_id=task.meta.relation_id,
                subject=task.meta.subject,
                template_index=task.meta.template_index,
                prompt=task.request.prompt,
                chosen=chosen,
                scores=list(resp.scores),
                passages=resp.passages,
                query_embedding=resp.query_embedding,
                free_generation=resp.free_generation,
            )
            fresh[task.key] = pred
            to_write.append(pred)
            flushed += 1

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {pool.submit(score, b) for b in batches}
        try:
            while futures:
                done, futures = wait(futures, return_when=FIRST_COMPLETED)
                for fut in done:
                    for index, resp in fut.result():
                        raw[index] = resp
                flush_ready()
                append_predictions(cache_path, to_write)
                to_write.clear()
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return fresh
