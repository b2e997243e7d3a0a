"""Prediction cache: JSONL with a header line binding it to its producing run.

The header records endpoint identity, seed, passage count, dataset digest
and (for intervention runs) the plan digest; loading with a different
expected header rejects the cache instead of silently mixing runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import DigestMismatchError, ValidationError
from .protocol import Prediction

CACHE_VERSION = 1

Key = tuple[str, str, int]


@dataclass(frozen=True)
class CacheHeader:
    endpoint: str
    seed: int
    n_passages: int
    dataset_digest: str
    intervention: str | None = None
    plan_digest: str | None = None
    version: int = CACHE_VERSION

    def to_json(self) -> str:
        obj = {"kind": "prediction-cache", **asdict(self)}
        return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str, where: str) -> "CacheHeader":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{where}: cache header is not JSON ({exc.msg})") from exc
        if obj.get("kind") != "prediction-cache":
            raise ValidationError(f"{where}: not a prediction cache")
        return cls(
            endpoint=obj["endpoint"],
            seed=int(obj["seed"]),
            n_passages=int(obj["n_passages"]),
            dataset_digest=obj["dataset_digest"],
            intervention=obj.get("intervention"),
            plan_digest=obj.get("plan_digest"),
            version=int(obj.get("version", 1)),
        )


def _pred_line(pred: Prediction) -> str:
    return json.dumps(pred.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def read_cache(path: Path | str) -> tuple[CacheHeader, dict[Key, Prediction]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty cache file")
    header = CacheHeader.from_json(lines[0], str(path))
    preds: dict[Key, Prediction] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            pred = Prediction.from_dict(json.loads(raw))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad cache record ({exc})") from exc
        preds[pred.key] = pred
    return header, preds


def open_cache_for_run(
    path: Path | str, expected: CacheHeader
) -> dict[Key, Prediction]:
    """Return warm entries, creating the file (with header) if absent.

    An existing cache whose header differs from the expected one in any
    field is stale and rejected.
    """
    path = Path(path)
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(expected.to_json() + "\n", encoding="utf-8")
        return {}
    header, preds = read_cache(path)
    if header != expected:
        raise DigestMismatchError(
            f"{path}: cache header does not match this run "
            f"(cached {header}, expected {expected})"
        )
    return preds


def append_predictions(path: Path | str, predictions: list[Prediction]) -> None:
    if not predictions:
        return
    with open(path, "a", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(_pred_line(pred) + "\n")
